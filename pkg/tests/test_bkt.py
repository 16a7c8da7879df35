import numpy as np
import pytest

from ktbench.bkt import (
    BktModel,
    BktParams,
    BktState,
    EmConfig,
    baum_welch,
    bkt_predict,
    bkt_predict_sequence,
    bkt_update,
    fit_bkt,
    load_bkt,
    save_bkt,
)
from ktbench.dataset import build_dataset, generate_synthetic
from ktbench.errors import ModelError


def test_params_validation():
    with pytest.raises(ModelError):
        BktParams(1.2, 0.1, 0.1, 0.1)
    with pytest.raises(ModelError):
        BktParams(0.3, 0.1, 0.7, 0.1)  # guess above the identifiability cap


def test_params_clamped_into_bounds():
    p = BktParams.clamped(0.0, 1.0, 0.9, -0.5)
    assert 0 < p.p_init < 1 and 0 < p.p_learn < 1
    assert p.p_guess == 0.5 and p.p_slip > 0


def test_predict_deterministic_mastery():
    p = bkt_predict(BktState(1.0), BktParams(0.5, 0.1, 0.2, 0.0))
    assert p.p_correct == 1.0


def test_predict_emission_formula():
    p = bkt_predict(BktState(0.6), BktParams(0.5, 0.1, 0.2, 0.1))
    assert p.p_correct == pytest.approx(0.6 * 0.9 + 0.4 * 0.2)  # 0.62


def test_predict_uninformative_emission():
    params = BktParams(0.5, 0.0, 0.5, 0.5)
    for know in (0.0, 0.3, 0.9):
        assert bkt_predict(BktState(know), params).p_correct == pytest.approx(0.5)


def test_update_hand_recursion():
    params = BktParams(p_init=0.5, p_learn=0.3, p_guess=0.2, p_slip=0.1)
    state = bkt_update(BktState(0.6), params, observed=1)
    posterior = 0.54 / 0.62
    assert state.p_know == pytest.approx(posterior + (1 - posterior) * 0.3)
    assert state.p_know == pytest.approx(0.90968, abs=1e-5)


def test_update_uninformative_no_learning_keeps_state():
    params = BktParams(0.5, 0.0, 0.5, 0.5)
    state = bkt_update(BktState(0.37), params, observed=1)
    assert state.p_know == pytest.approx(0.37)


def test_update_zero_probability_observation():
    params = BktParams(p_init=0.5, p_learn=0.1, p_guess=0.0, p_slip=0.0)
    with pytest.raises(ModelError):
        bkt_update(BktState(0.0), params, observed=1)


def test_update_probabilities_stay_in_range(rng):
    for _ in range(200):
        params = BktParams.clamped(*rng.uniform(0.01, 0.49, size=4))
        state = BktState(float(rng.random()))
        obs = int(rng.integers(0, 2))
        new = bkt_update(state, params, obs)
        assert 0.0 <= new.p_know <= 1.0
        assert 0.0 <= bkt_predict(new, params).p_correct <= 1.0


# --- EM -----------------------------------------------------------------------

def enumerate_chain_likelihood(chain, p):
    """Exact P(observations) by summing over all latent knowledge paths.

    Independent oracle for the scaled forward pass: states are (not-known,
    known), transitions [[1-learn, learn], [0, 1]], emissions guess / 1-slip.
    """
    import itertools

    init = [1.0 - p.p_init, p.p_init]
    trans = [[1.0 - p.p_learn, p.p_learn], [0.0, 1.0]]
    total = 0.0
    for path in itertools.product((0, 1), repeat=len(chain)):
        prob = init[path[0]]
        for a, b in zip(path, path[1:]):
            prob *= trans[a][b]
        for state, y in zip(path, chain):
            if state == 0:
                prob *= p.p_guess if y == 1 else 1.0 - p.p_guess
            else:
                prob *= 1.0 - p.p_slip if y == 1 else p.p_slip
        total += prob
    return total


def test_forward_likelihood_matches_path_enumeration(rng):
    import math

    from ktbench.bkt import _e_step, _pad_chains

    for _ in range(25):
        params = BktParams.clamped(
            rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.6),
            rng.uniform(0.05, 0.45), rng.uniform(0.05, 0.45),
        )
        chains = [
            rng.integers(0, 2, size=int(rng.integers(1, 9))).astype(np.int8)
            for _ in range(int(rng.integers(1, 4)))
        ]
        obs, lengths = _pad_chains(chains)
        ll, _ = _e_step(obs, lengths, params)
        expect = sum(math.log(enumerate_chain_likelihood(c, params)) for c in chains)
        assert ll == pytest.approx(expect, rel=1e-10)


def test_correct_observation_never_lowers_belief(rng):
    # with guess <= 0.5 <= 1 - slip a correct answer is always evidence for
    # the known state, and the learning transition only adds to it
    for _ in range(200):
        params = BktParams.clamped(
            rng.uniform(0.01, 0.99), rng.uniform(0.0, 1.0),
            rng.uniform(0.0, 0.5), rng.uniform(0.0, 0.5),
        )
        know = float(rng.random())
        after = bkt_update(BktState(know), params, observed=1)
        assert after.p_know >= know - 1e-12


def chains_from(ds, skill=0):
    out = []
    for seq in ds.sequences:
        labels = [r.correct for r in seq.records if r.skill_id == skill]
        if labels:
            out.append(np.asarray(labels, dtype=np.int8))
    return out


def test_em_loglik_monotone_on_synthetic():
    ds = generate_synthetic({0: (0.4, 0.15, 0.2, 0.15)}, n_students=60, seq_len=20, seed=3)
    _, history = baum_welch(chains_from(ds), BktParams(0.5, 0.3, 0.2, 0.2), max_iters=60)
    diffs = np.diff(history)
    assert np.all(diffs >= -1e-9)


def test_em_loglik_monotone_on_degenerate_all_correct():
    chains = [np.ones(12, dtype=np.int8) for _ in range(20)]
    _, history = baum_welch(chains, BktParams(0.4, 0.3, 0.2, 0.2), max_iters=60)
    assert np.all(np.diff(history) >= -1e-9)


def test_fit_all_correct_skill_hits_boundary():
    rows = [("deg", 0, 0, 1)] * 15 + [("mix", 0, 0, 1), ("mix", 0, 0, 0)] * 3
    ds = build_dataset("t", rows)
    model = fit_bkt(ds, EmConfig(seed=0, min_obs=1))
    seq = build_dataset("t", [("x", 0, 0, 1)] * 5).sequences[0]
    preds = bkt_predict_sequence(model, seq)
    # mostly-correct data pushes the late-sequence predictions high
    assert preds[-1].p_correct >= 0.9


def test_parameter_recovery_single_seed():
    true = (0.3, 0.2, 0.1, 0.1)
    ds = generate_synthetic({0: true}, n_students=500, seq_len=50, seed=1)
    model = fit_bkt(ds, EmConfig(seed=1))
    p = model.per_skill[0]
    got = np.array([p.p_init, p.p_learn, p.p_guess, p.p_slip])
    assert np.all(np.abs(got - np.array(true)) <= 0.05)


def test_fit_deterministic_given_seed(synthetic_dataset):
    cfg = EmConfig(seed=11, restarts=2, max_iters=40)
    a = fit_bkt(synthetic_dataset, cfg)
    b = fit_bkt(synthetic_dataset, cfg)
    assert a.per_skill == b.per_skill
    assert a.default_params == b.default_params


def test_thin_skills_inherit_pooled_parameters():
    rows = [("u%d" % i, 0, 0, i % 2) for i in range(40)]
    rows += [("u0", 1, 1, 1), ("u1", 1, 1, 0)]  # skill 1: only 2 observations
    ds = build_dataset("t", rows)
    model = fit_bkt(ds, EmConfig(seed=0, min_obs=10))
    assert model.per_skill[1] == model.default_params


# --- sequence prediction --------------------------------------------------------

def forward_filter_predictions(params, labels):
    """One-step-ahead predictive via explicit forward filtering.

    Independent of the recursive belief-update implementation: tracks the
    joint filter over (not-known, known) and computes P(correct | history).
    """
    trans = np.array([[1.0 - params.p_learn, params.p_learn], [0.0, 1.0]])
    emit_correct = np.array([params.p_guess, 1.0 - params.p_slip])
    state = np.array([1.0 - params.p_init, params.p_init])
    out = []
    for y in labels:
        out.append(float(state @ emit_correct))
        like = emit_correct if y == 1 else 1.0 - emit_correct
        state = state * like
        state = state / state.sum()
        state = state @ trans
    return out


def test_sequence_predictions_match_forward_filtering(rng):
    for _ in range(30):
        params = BktParams.clamped(
            rng.uniform(0.05, 0.95), rng.uniform(0.01, 0.8),
            rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5),
        )
        model = BktModel(per_skill={0: params}, default_params=params)
        labels = rng.integers(0, 2, size=int(rng.integers(1, 15))).tolist()
        seq = build_dataset("t", [("u", 0, 0, c) for c in labels]).sequences[0]
        got = [p.p_correct for p in bkt_predict_sequence(model, seq)]
        expect = forward_filter_predictions(params, labels)
        assert np.allclose(got, expect, atol=1e-12)

def test_first_prediction_is_initialization_identity():
    params = BktParams(p_init=0.4, p_learn=0.2, p_guess=0.15, p_slip=0.1)
    model = BktModel(per_skill={0: params}, default_params=params)
    seq = build_dataset("t", [("u", 0, 0, 1), ("u", 0, 0, 0)]).sequences[0]
    preds = bkt_predict_sequence(model, seq)
    assert preds[0].p_correct == pytest.approx(0.4 * 0.9 + 0.6 * 0.15)


def test_correct_streak_nondecreasing():
    params = BktParams(p_init=0.3, p_learn=0.2, p_guess=0.15, p_slip=0.1)
    model = BktModel(per_skill={0: params}, default_params=params)
    seq = build_dataset("t", [("u", 0, 0, 1)] * 10).sequences[0]
    probs = [p.p_correct for p in bkt_predict_sequence(model, seq)]
    assert all(b >= a - 1e-12 for a, b in zip(probs, probs[1:]))


def test_unseen_skill_uses_default_params():
    fitted = BktParams(0.4, 0.2, 0.2, 0.1)
    default = BktParams(0.6, 0.1, 0.3, 0.2)
    model = BktModel(per_skill={0: fitted}, default_params=default)
    seq = build_dataset("t", [("u", 9, 9, 1)]).sequences[0]
    pred = bkt_predict_sequence(model, seq)[0]
    assert pred.p_correct == pytest.approx(0.6 * 0.8 + 0.4 * 0.3)


def test_prediction_precedes_update_no_label_leakage():
    params = BktParams(p_init=0.3, p_learn=0.2, p_guess=0.15, p_slip=0.1)
    model = BktModel(per_skill={0: params, 1: params}, default_params=params)
    rows = [("u", i, i % 2, (i * 7) % 3 % 2) for i in range(10)]
    seq = build_dataset("t", rows).sequences[0]
    base = [p.p_correct for p in bkt_predict_sequence(model, seq)]
    for i in range(len(rows)):
        flipped = list(rows)
        flipped[i] = (rows[i][0], rows[i][1], rows[i][2], 1 - rows[i][3])
        seq2 = build_dataset("t", flipped).sequences[0]
        other = [p.p_correct for p in bkt_predict_sequence(model, seq2)]
        assert other[: i + 1] == base[: i + 1]


# --- serialization ---------------------------------------------------------------

def test_model_roundtrip(tmp_path, synthetic_dataset):
    model = fit_bkt(synthetic_dataset, EmConfig(seed=0, restarts=2, max_iters=30))
    path = tmp_path / "bkt.txt"
    save_bkt(model, path)
    again = load_bkt(path)
    assert again.default_params == model.default_params
    assert again.per_skill == dict(model.per_skill)
