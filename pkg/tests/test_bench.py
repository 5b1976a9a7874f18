import re
from collections import Counter
from dataclasses import replace

import pytest

from kgbench.bench import (
    BalanceConfig,
    BuildConfig,
    PlanConfig,
    QuestionRecord,
    SplitConfig,
    _question_or_fallback,
    build,
    complete_answers,
    dataset_statistics,
    downsample,
    load_bundle,
    plan_removals,
    split,
    validate_question,
    write_bundle,
)
from kgbench.errors import (
    CorruptBundle,
    EmptyAnswerSet,
    EmptyCompletion,
    EmptyPlan,
    ValidationFailure,
)
from kgbench.graph import Direction, LabelScheme, LabelVariant, Triple, remove
from kgbench.grounding import bodies
from kgbench.llm import (
    API_KEY_ENV,
    BASE_URL_ENV,
    FALLBACK_API_KEY_ENV,
    LLMConfig,
    LLMGenerator,
    TemplateGenerator,
    Transcript,
)
from kgbench.miner import MinerConfig, mine
from kgbench.rules import parse_rule
from kgbench.taxonomy import RuleType
from kgbench.timer import Timer
from kgbench.verify import verify_bundle
from tests.synthetic import PLANTED_RULE, family_graph, make_graph


def record(i: int, hard: str, **fields) -> QuestionRecord:
    values = dict(
        id=f"q{i:05d}",
        question=f"Which entity is t{i} the p of?",
        topic_entity=f"t{i}",
        answers=[hard],
        hard_answer=hard,
        predicate="p",
        direction=Direction.HEAD_AS_TOPIC,
        rule_type=RuleType.INVERSION,
        removed_triple=(f"t{i}", "p", hard),
        rule="q(?b,?a) => p(?a,?b)",
        witness=[(hard, "q", f"t{i}")],
    )
    values.update(fields)
    return QuestionRecord(**values)


class TestPlan:
    def test_planted_removal(self, family):
        rule = parse_rule(PLANTED_RULE, family)
        plan = plan_removals(family, [rule], PlanConfig(per_rule_limit=10**6))
        head = Triple(family.entity("139"), family.predicate("brotherOf"), family.entity("205"))
        (removal,) = [r for r in plan if r.head_triple == head]
        assert {family.label_triple(t) for t in removal.witness.body_triples} == {
            ("139", "fatherOf", "14"),
            ("205", "uncleOf", "14"),
        }
        assert removal.rule == rule

    def test_heads_kept_as_bodies_are_skipped(self):
        graph = make_graph([("a", "p", "b"), ("a", "q", "b")])
        first = parse_rule("q(?x,?y) => p(?x,?y)", graph)
        second = parse_rule("p(?x,?y) => q(?x,?y)", graph)
        plan = plan_removals(graph, [first, second])
        assert [graph.label_triple(t) for t in plan.triples] == [("a", "p", "b")]

    def test_symmetric_pairs(self):
        graph = make_graph([("a", "p", "b"), ("b", "p", "a")])
        plan = plan_removals(graph, [parse_rule("p(?y,?x) => p(?x,?y)", graph)])
        assert len(plan) == 1

    def test_self_loops_are_skipped(self):
        graph = make_graph([("a", "p", "a"), ("a", "q", "a")])
        with pytest.raises(EmptyPlan):
            plan_removals(graph, [parse_rule("q(?x,?y) => p(?x,?y)", graph)])

    def test_empty_plans(self, family, family_rules):
        with pytest.raises(EmptyPlan):
            plan_removals(family, family_rules, PlanConfig(per_rule_limit=0))
        with pytest.raises(EmptyPlan):
            plan_removals(family, [])

    def test_constraints_hold(self, family, family_rules):
        plan = plan_removals(family, family_rules, PlanConfig(per_rule_limit=30))
        heads = set(plan.triples)
        assert len(heads) == len(plan)
        incomplete = remove(family, heads)
        for removal in plan:
            body = removal.witness.body_triples
            assert not heads & set(body)
            assert all(t in incomplete for t in body)
            assert body in bodies(removal.rule, incomplete, removal.head_triple)
            assert removal.head_triple.subject != removal.head_triple.object

    def test_per_rule_limit(self, family, family_rules):
        plan = plan_removals(family, family_rules, PlanConfig(per_rule_limit=2))
        per_rule = Counter(r.rule for r in plan)
        assert max(per_rule.values()) <= 2

    def test_seeded_sample(self, family):
        rule = parse_rule(PLANTED_RULE, family)
        config = PlanConfig(per_rule_limit=5, seed=3)
        one = plan_removals(family, [rule], config).triples
        assert one == plan_removals(family, [rule], config).triples
        assert one == sorted(one)
        assert one != plan_removals(family, [rule], PlanConfig(per_rule_limit=5)).triples


class TestQuestions:
    @pytest.mark.kwparametrize(
        dict(text="Who is 139's brother?", topic="139", answer="205"),
        dict(text="Who is Carol's wife?", topic="Carol", answer="Alice"),
        dict(text="Which entity is 139 the brotherOf of?", topic="139", answer="13"),
    )
    def test_accepted(self, text, topic, answer):
        assert validate_question(text, topic, answer) == text

    @pytest.mark.kwparametrize(
        dict(text="", reason="empty"),
        dict(text="Who is the brother of 138?", reason="topic"),
        dict(text="Who besides 205 is a brother of 139?", reason="answer"),
        dict(text="Does 139 have a brother?", reason="yes/no"),
        dict(text="Is 139 anyone's brother?", reason="yes/no"),
    )
    def test_rejected(self, text, reason):
        with pytest.raises(ValidationFailure) as info:
            validate_question(text, "139", "205")
        assert reason in info.value.reason

    def test_regenerate_once_then_fall_back(self):
        removed = ("139", "brotherOf", "205")

        class Scripted:
            def __init__(self, *replies):
                self.replies, self.retries = list(replies), []

            def question(self, removed, direction, retry=False):
                self.retries.append(retry)
                reply = self.replies.pop(0)
                if isinstance(reply, Exception):
                    raise reply
                return reply

        second_try = Scripted("Is 139 a brother?", "Who is 139's brother?")
        text, fell_back = _question_or_fallback(removed, Direction.HEAD_AS_TOPIC, second_try)
        assert (text, fell_back) == ("Who is 139's brother?", False)
        assert second_try.retries == [False, True]

        hopeless = Scripted("Who is 205?", EmptyCompletion("nothing"))
        text, fell_back = _question_or_fallback(removed, Direction.HEAD_AS_TOPIC, hopeless)
        assert (text, fell_back) == ("Which entity is 139 the brotherOf of?", True)

    def test_fallback_naming_the_answer_is_rejected(self):
        removed = ("New York City", "locatedIn", "York")
        with pytest.raises(ValidationFailure) as info:
            _question_or_fallback(removed, Direction.HEAD_AS_TOPIC, TemplateGenerator())
        assert "answer" in info.value.reason
        asked = _question_or_fallback(removed, Direction.TAIL_AS_TOPIC, TemplateGenerator())
        assert asked == ("Which entity is the locatedIn of York?", False)

    def test_complete_answers(self, family):
        brother, father = family.predicate("brotherOf"), family.predicate("fatherOf")
        answers = complete_answers(family, family.entity("139"), brother, Direction.HEAD_AS_TOPIC)
        assert {family.entity_label(e) for e in answers} == {"205", "138", "2973", "2974"}
        fathers = complete_answers(family, family.entity("14"), father, Direction.TAIL_AS_TOPIC)
        assert {family.entity_label(e) for e in fathers} == {"139"}
        with pytest.raises(EmptyAnswerSet):
            complete_answers(family, family.entity("14"), brother, Direction.HEAD_AS_TOPIC)

    def test_record_validation(self):
        with pytest.raises(ValueError):
            record(1, "a", answers=["b"])
        with pytest.raises(ValueError):
            record(1, "a", answers=[])
        with pytest.raises(ValueError):
            record(1, "t1")


class TestBalance:
    @pytest.fixture()
    def questions(self):
        hards = ["a", "b", "a", "c", "a", "d", "a", "e", "a", "f"]
        return [record(i, hard) for i, hard in enumerate(hards, start=1)]

    def test_cap(self, questions):
        kept = downsample(questions, BalanceConfig(tau=0.2, seed=0))
        assert len(kept) == 7
        assert Counter(q.hard_answer for q in kept) == dict(a=2, b=1, c=1, d=1, e=1, f=1)
        assert [q.id for q in kept] == sorted(q.id for q in kept)

    def test_seeded(self, questions):
        config = BalanceConfig(tau=0.2, seed=9)
        assert downsample(questions, config) == downsample(questions, config)

    def test_no_cap(self, questions):
        assert downsample(questions, BalanceConfig(tau=1.0)) == questions

    def test_cap_uses_original_size(self):
        # 2 of 4 is exactly tau * n: not over the cap
        questions = [record(i, hard) for i, hard in enumerate("aabc", start=1)]
        assert len(downsample(questions, BalanceConfig(tau=0.5))) == 4
        assert len(downsample(questions, BalanceConfig(tau=0.3))) == 3

    def test_empty(self):
        assert downsample([], BalanceConfig()) == []


class TestSplit:
    def test_ten(self):
        questions = [record(i, "x") for i in range(10)]
        train, validation, test = split(questions, SplitConfig(ratios=(8, 1, 1), seed=0))
        assert (len(train), len(validation), len(test)) == (8, 1, 1)
        assert sorted(q.id for q in train + validation + test) == [q.id for q in questions]
        assert split(questions, SplitConfig(seed=0)) == (train, validation, test)

    def test_large(self):
        questions = [record(i, "x") for i in range(5449)]
        sizes = [len(part) for part in split(questions, SplitConfig(seed=1))]
        assert sizes == [4359, 544, 546]

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            SplitConfig(ratios=(0, 0, 0))
        with pytest.raises(ValueError):
            SplitConfig(ratios=(8, -1, 3))


class TestBuild:
    @pytest.fixture(scope="class")
    def bundle(self, family, family_rules):
        config = BuildConfig(balance=BalanceConfig(tau=1.0))
        return build(family, family_rules, config, TemplateGenerator(), preset="family")

    def test_every_question_is_inferable(self, bundle):
        assert verify_bundle(bundle) == []

    def test_counts(self, bundle):
        counts = bundle.manifest.counts
        assert counts.removed_triples == len(bundle.complete_graph) - len(bundle.incomplete_graph)
        assert counts.questions_generated == counts.questions_balanced == len(bundle.questions)
        assert counts.template_fallbacks == 0
        assert len({q.id for q in bundle.questions}) == len(bundle.questions)
        statistics = dataset_statistics(bundle)
        assert statistics.removed_triples == counts.removed_triples
        assert statistics.questions == len(bundle.questions)

    def test_records(self, bundle):
        for q in bundle.questions:
            assert q.topic_entity in q.question
            assert q.hard_answer in q.answers
            topic, hard = (
                (q.removed_triple[0], q.removed_triple[2])
                if q.direction is Direction.HEAD_AS_TOPIC
                else (q.removed_triple[2], q.removed_triple[0])
            )
            assert (q.topic_entity, q.hard_answer) == (topic, hard)

    def test_verifier_catches_tampering(self, bundle):
        q = bundle.train[0]
        wrong_answers = q.model_copy(update={"answers": q.answers + ["1"]})
        kept = next(t for t in bundle.incomplete_graph)
        still_present = q.model_copy(
            update={"removed_triple": bundle.incomplete_graph.label_triple(kept)}
        )
        tampered = replace(bundle, train=[wrong_answers, still_present], validation=[], test=[])
        problems = [f.problem for f in verify_bundle(tampered)]
        assert "answer set differs from the complete graph" in problems
        assert "removed triple is still in the incomplete graph" in problems

    def test_removal_without_a_usable_question_is_skipped(self):
        twin = "twin of York or New York"
        pairs = [("Anna", "Ben"), ("York", "New York")]
        graph = make_graph([t for a, b in pairs for t in ((a, twin, b), (b, twin, a))])
        symmetry = f"{twin}(?y,?x) => {twin}(?x,?y)"
        config = BuildConfig(balance=BalanceConfig(tau=1.0))
        bundle = build(graph, [parse_rule(symmetry, graph)], config, TemplateGenerator())
        counts = bundle.manifest.counts
        assert (counts.removed_triples, counts.questions_skipped) == (1, 1)
        assert len(bundle.incomplete_graph) == 3
        (q,) = bundle.questions
        assert {q.topic_entity, q.hard_answer} == {"Anna", "Ben"}
        assert verify_bundle(bundle) == []

        only_york = make_graph([("York", twin, "New York"), ("New York", twin, "York")])
        with pytest.raises(EmptyPlan):
            build(only_york, [parse_rule(symmetry, only_york)], config, TemplateGenerator())

    def test_private_ids(self, family, family_rules, tmp_path):
        scheme = LabelScheme(variant=LabelVariant.PRIVATE_ID, seed=5)
        config = BuildConfig(balance=BalanceConfig(tau=1.0))
        bundle = build(family, family_rules, config, TemplateGenerator(), label_scheme=scheme)
        assert verify_bundle(bundle) == []
        assert set(bundle.mapping) == {family.entity_label(e) for e in range(family.entity_count)}
        private = set(bundle.mapping.values())
        original = {new: old for old, new in bundle.mapping.items()}
        for q in bundle.questions:
            assert {q.topic_entity, q.hard_answer, *q.answers} <= private
            s, p, o = q.removed_triple
            assert family.has(
                family.entity(original[s]), family.predicate(p), family.entity(original[o])
            )

        write_bundle(bundle, tmp_path / "bundle")
        assert load_bundle(tmp_path / "bundle").mapping == bundle.mapping
        (tmp_path / "bundle" / "mapping.tsv").unlink()
        with pytest.raises(CorruptBundle):
            load_bundle(tmp_path / "bundle")

    def test_inferability_check_on_a_larger_graph(self):
        graph = family_graph(clans=60)
        assert 1500 <= len(graph) <= 2500
        config = BuildConfig(plan=PlanConfig(per_rule_limit=1000), balance=BalanceConfig(tau=1.0))
        bundle = build(graph, mine(graph, MinerConfig()), config, TemplateGenerator())
        assert len(bundle.questions) >= 100
        with Timer("verify", logger=None) as timer:
            assert verify_bundle(bundle) == []
        assert timer.last < 30

    def test_deterministic(self, family, family_rules, bundle, tmp_path):
        again = build(
            family,
            family_rules,
            BuildConfig(balance=BalanceConfig(tau=1.0)),
            TemplateGenerator(),
            preset="family",
        )
        write_bundle(bundle, tmp_path / "one")
        write_bundle(again, tmp_path / "two")
        for path in sorted((tmp_path / "one").iterdir()):
            assert path.read_bytes() == (tmp_path / "two" / path.name).read_bytes()

    def test_transcript_replay_needs_no_network(self, family, family_rules, tmp_path, monkeypatch):
        for name in (BASE_URL_ENV, API_KEY_ENV, FALLBACK_API_KEY_ENV):
            monkeypatch.delenv(name, raising=False)

        class Phrasing:
            def complete(self, request):
                topic = re.search(r"^Question Entity: (.*)$", request.prompt, re.MULTILINE)[1]
                return f"Which relative of {topic} is meant?"

        config = BuildConfig(balance=BalanceConfig(tau=1.0), workers=4)
        path = tmp_path / "transcript.jsonl"
        recording = LLMGenerator(LLMConfig(), Transcript(path), transport=Phrasing())
        recorded = build(family, family_rules, config, recording, "llm:gpt-4")
        assert recorded.manifest.counts.template_fallbacks == 0
        assert all(q.question.startswith("Which relative of ") for q in recorded.questions)

        replaying = LLMGenerator(LLMConfig(), Transcript(path))
        assert replaying.transport is None
        replayed = build(family, family_rules, config, replaying, "llm:gpt-4")
        write_bundle(recorded, tmp_path / "recorded")
        write_bundle(replayed, tmp_path / "replayed")
        for file in sorted((tmp_path / "recorded").iterdir()):
            assert file.read_bytes() == (tmp_path / "replayed" / file.name).read_bytes()

    def test_write_and_load(self, bundle, tmp_path):
        write_bundle(bundle, tmp_path / "bundle")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["bundle"]
        loaded = load_bundle(tmp_path / "bundle")
        assert loaded.splits == bundle.splits
        assert loaded.manifest == bundle.manifest
        for view in ("complete_graph", "incomplete_graph"):
            old, new = getattr(bundle, view), getattr(loaded, view)
            assert {new.label_triple(t) for t in new} == {old.label_triple(t) for t in old}
        assert verify_bundle(loaded) == []

    def test_corrupt_bundles(self, bundle, tmp_path):
        write_bundle(bundle, tmp_path / "missing")
        (tmp_path / "missing" / "test.jsonl").unlink()
        with pytest.raises(CorruptBundle):
            load_bundle(tmp_path / "missing")

        write_bundle(bundle, tmp_path / "counts")
        manifest = tmp_path / "counts" / "manifest.json"
        counts = bundle.manifest.counts
        counts = counts.model_copy(update={"train": counts.train + 1})
        manifest.write_text(bundle.manifest.model_copy(update={"counts": counts}).model_dump_json())
        with pytest.raises(CorruptBundle):
            load_bundle(tmp_path / "counts")

    def test_per_rule_limit_zero(self, family, family_rules):
        config = BuildConfig(plan=PlanConfig(per_rule_limit=0))
        with pytest.raises(EmptyPlan):
            build(family, family_rules, config, TemplateGenerator())

    def test_direction_seed(self, family, family_rules):
        def directions(seed):
            config = BuildConfig(balance=BalanceConfig(tau=1.0), direction_seed=seed)
            bundle = build(family, family_rules, config, TemplateGenerator())
            return {q.id: q.direction for q in bundle.questions}

        assert directions(5) == directions(5)
        assert set(directions(5).values()) == set(Direction)
