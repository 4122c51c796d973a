import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import delphi_expected, parse_delphi_table, round_has_majority

from edemakit.consensus import (
    ConsensusOutcome,
    VoteLog,
    VoteLogError,
    fleiss_kappa,
    format_outcomes_csv,
    initial_vote_matrix,
    parse_vote_line,
    read_vote_logs,
    reduce_consensus,
    vote_log_to_json,
)

RESIDENTS = ("R1", "R2", "R3")
PANEL = ("R1", "R2", "R3", "A1")


def log(initial, attending=None, rounds=()):
    return VoteLog(
        "img",
        tuple(zip(RESIDENTS, initial)),
        None if attending is None else ("A1", attending),
        tuple(tuple(zip(PANEL, r)) for r in rounds),
    )


ALL_ROUNDS = list(itertools.product(range(4), repeat=4))
SPLIT_ROUNDS = [r for r in ALL_ROUNDS if not round_has_majority(r)]


class TestReduce:
    def test_unanimous(self):
        assert reduce_consensus(log((2, 2, 2))) == ConsensusOutcome(2, "unanimous3", 0)

    def test_majority4(self):
        assert reduce_consensus(log((1, 1, 3), 1)) == ConsensusOutcome(1, "majority4", 0)

    def test_discussion(self):
        o = reduce_consensus(log((1, 2, 3), 2, [(2, 2, 3, 2)]))
        assert (o.label, o.path_name, o.rounds_used) == (2, "discussion_round(1)", 1)

    def test_no_consensus(self):
        o = reduce_consensus(log((1, 1, 2), 2, [(1, 1, 2, 2)] * 3))
        assert o.label is None and o.path == "no_consensus" and o.path_name == "no_consensus"

    def test_max_rounds_parameter(self):
        rounds = [(1, 1, 2, 2), (1, 1, 2, 2), (3, 3, 3, 1)]
        assert reduce_consensus(log((1, 1, 2), 2, rounds), max_rounds=2).label is None
        assert reduce_consensus(log((1, 1, 2), 2, rounds), max_rounds=3).label == 3

    def test_missing_attending(self):
        with pytest.raises(VoteLogError, match="attending"):
            reduce_consensus(log((0, 0, 1)))

    def test_missing_round(self):
        with pytest.raises(VoteLogError, match="round 2"):
            reduce_consensus(log((0, 0, 1), 2, [(0, 0, 1, 1)]))

    def test_round_wrong_size(self):
        bad = VoteLog("x", tuple(zip(RESIDENTS, (0, 1, 2))), ("A1", 3), ((("R1", 0), ("R2", 0), ("R3", 0)),))
        with pytest.raises(VoteLogError, match="3 votes"):
            reduce_consensus(bad)

    def test_unreached_stages_not_read(self):
        # a malformed round after the decision point is never inspected
        trailing = (("R1", 0),)
        lg = VoteLog("x", tuple(zip(RESIDENTS, (0, 0, 1))), ("A1", 1), ((("R1", 1), ("R2", 1), ("R3", 1), ("A1", 0)), trailing))
        assert reduce_consensus(lg).rounds_used == 1

    def test_validation(self):
        with pytest.raises(VoteLogError):
            VoteLog("x", (("R1", 0), ("R2", 0)))
        with pytest.raises(VoteLogError):
            VoteLog("x", (("R1", 0), ("R1", 0), ("R3", 0)))
        with pytest.raises(ValueError):
            VoteLog("x", (("R1", 0), ("R2", 0), ("R3", 7)))


class TestDecisionTable:
    def test_exhaustive_initial_and_attending(self):
        split = SPLIT_ROUNDS[0]
        for initial in itertools.product(range(4), repeat=3):
            for att in range(4):
                rounds = [split] * 3
                o = reduce_consensus(log(initial, att, rounds))
                assert (o.label, o.path, o.rounds_used) == delphi_expected(initial, att, rounds), (initial, att)

    def test_rounds_enumerated(self):
        discussed = [(i, a) for i in itertools.product(range(4), repeat=3) for a in range(4)
                     if parse_delphi_table()[tuple(sorted(i))][a] == "D"]
        # 256 ordered (initial, attending) cases less 16 unanimous and 36 attending-majority
        assert len(discussed) == 204
        split = SPLIT_ROUNDS[-1]
        for initial, att in discussed:
            for r1 in ALL_ROUNDS:
                rounds = [r1, split, split]
                o = reduce_consensus(log(initial, att, rounds))
                assert (o.label, o.path, o.rounds_used) == delphi_expected(initial, att, rounds)
        initial, att = discussed[0]
        for r2 in ALL_ROUNDS:
            for r3 in (SPLIT_ROUNDS[0], (3, 3, 3, 0)):
                rounds = [SPLIT_ROUNDS[1], r2, r3]
                o = reduce_consensus(log(initial, att, rounds))
                assert (o.label, o.path, o.rounds_used) == delphi_expected(initial, att, rounds)

    def test_table_shape(self):
        t = parse_delphi_table()
        assert len(t) == 20 and all(len(v) == 4 for v in t.values())

    @settings(max_examples=200)
    @given(
        st.tuples(*[st.integers(0, 3)] * 3),
        st.integers(0, 3),
        st.lists(st.tuples(*[st.integers(0, 3)] * 4), min_size=3, max_size=3),
        st.permutations(range(3)),
        st.permutations(range(4)),
    )
    def test_rater_permutation_invariance(self, initial, att, rounds, p3, p4):
        base = reduce_consensus(log(initial, att, rounds))
        perm_initial = tuple(initial[i] for i in p3)
        perm_rounds = [tuple(r[i] for i in p4) for r in rounds]
        assert reduce_consensus(log(perm_initial, att, perm_rounds)) == base


class TestFleiss:
    def test_perfect(self):
        assert fleiss_kappa([[0, 0, 0], [2, 2, 2], [3, 3, 3]]) == 1.0

    def test_derived(self):
        assert abs(fleiss_kappa([[0, 0, 0], [0, 0, 1]]) - (-0.2)) <= 1e-12

    def test_single_category(self):
        assert fleiss_kappa([[1, 1, 1], [1, 1, 1]]) == 1.0

    def test_against_statsmodels(self):
        from statsmodels.stats.inter_rater import aggregate_raters
        from statsmodels.stats.inter_rater import fleiss_kappa as sm_fleiss

        rng = np.random.default_rng(0)
        truth = rng.integers(0, 4, 141)
        votes = np.clip(truth[:, None] + rng.integers(-1, 2, (141, 3)) * (rng.random((141, 3)) < 0.2), 0, 3)
        table, _ = aggregate_raters(votes, n_cat=4)
        assert fleiss_kappa(votes) == pytest.approx(sm_fleiss(table), abs=1e-12)

    @settings(max_examples=100)
    @given(
        st.lists(st.tuples(*[st.integers(0, 3)] * 3), min_size=2, max_size=20),
        st.permutations(range(4)),
        st.randoms(use_true_random=False),
    )
    def test_relabel_and_item_permutation(self, items, relabel, rnd):
        votes = np.array(items)
        try:
            k = fleiss_kappa(votes)
        except ZeroDivisionError:
            return
        mapped = np.vectorize(lambda c: relabel[c])(votes)
        shuffled = votes[rnd.sample(range(len(votes)), len(votes))]
        assert fleiss_kappa(mapped) == pytest.approx(k, abs=1e-12)
        assert fleiss_kappa(shuffled) == pytest.approx(k, abs=1e-12)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            fleiss_kappa([[0], [1]])


class TestFormats:
    def test_json_roundtrip(self):
        lg = log((1, 2, 3), 2, [(2, 2, 3, 1)])
        assert parse_vote_line(vote_log_to_json(lg), 1) == lg

    def test_read_and_write(self, tmp_path):
        p = tmp_path / "votes.jsonl"
        p.write_text(
            '{"image_id": "a", "initial": [["R1", 2], ["R2", 2], ["R3", 2]]}\n'
            '{"image_id": "b", "initial": [["R1", 1], ["R2", 1], ["R3", 3]], "attending": ["A1", 1]}\n'
        )
        logs = read_vote_logs(p)
        outcomes = [reduce_consensus(lg) for lg in logs]
        assert format_outcomes_csv(logs, outcomes) == (
            "image_id,label,path,rounds_used\na,2,unanimous3,0\nb,1,majority4,0\n"
        )
        assert initial_vote_matrix(logs).tolist() == [[2, 2, 2], [1, 1, 3]]

    def test_bad_line(self):
        with pytest.raises(VoteLogError, match="line 4"):
            parse_vote_line('{"image_id": "a", "initial": [["R1", 9], ["R2", 2], ["R3", 2]]}', 4)
