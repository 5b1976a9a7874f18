"""Settings for the two reference datasets. Command-line flags override single fields."""
from typing import Optional

from pydantic import BaseModel, ConfigDict

from kgbench.bench import BalanceConfig, BuildConfig, PlanConfig, SplitConfig
from kgbench.graph import LabelScheme
from kgbench.miner import MinerConfig


class Preset(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: Optional[str] = None
    miner: MinerConfig = MinerConfig()
    build: BuildConfig = BuildConfig()
    # entities become opaque random indices unless overridden
    label_scheme: LabelScheme = LabelScheme()


_THRESHOLDS = dict(min_confidence=0.3, min_head_coverage=0.1, min_pca_confidence=0.4)
_BUILD = BuildConfig(
    plan=PlanConfig(per_rule_limit=30),
    balance=BalanceConfig(tau=0.05),
    split=SplitConfig(ratios=(8, 1, 1)),
)

PRESETS: dict[str, Preset] = {
    "family": Preset(
        name="family",
        # short rules only; the family relations are dense
        miner=MinerConfig(max_length=3, **_THRESHOLDS),
        build=_BUILD,
    ),
    "fb15k237": Preset(
        name="fb15k237",
        miner=MinerConfig(max_length=4, **_THRESHOLDS),
        build=_BUILD,
    ),
}


def preset(name: Optional[str]) -> Preset:
    """The named preset, or the defaults (no name) for ``None``."""
    if name is None:
        return Preset()
    return PRESETS[name]
