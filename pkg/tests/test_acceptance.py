"""The twelve acceptance criteria, each at its stated tolerance and time budget.

Every criterion prints one PASS/FAIL line (collected again in the pytest
terminal summary). Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import struct

import numpy as np
import pytest

from acceptance_log import criterion
from helpers import brute_auroc, brute_youden, finite_difference_grads, max_relative_error

from ffl.data import (
    MultilabelDataset,
    binarize_chexpert,
    binarize_uka,
    default_synthetic_config,
    generate_synthetic,
    hist_equalize,
    minmax_normalize,
    split_train_test,
)
from ffl.evaluation import ScoreSet, auroc, bootstrap_spread, macro_auroc, paired_bootstrap_pvalue, youden_index
from ffl.experiments import default_experiment_config, run_experiment
from ffl.federated import (
    Aggregation,
    BadMagicError,
    BadVersionError,
    EnterFineTune,
    FederationConfig,
    GlobalBackbone,
    LocalBackbone,
    Observer,
    ProtocolError,
    Register,
    Shutdown,
    SiteSpec,
    TruncatedFrameError,
    UnknownMessageTypeError,
    aggregate,
    decode_message,
    encode_message,
    run_federated,
    run_local,
)
from ffl.federated.wire import params_equal
from ffl.nn import Dense, LossConfig, ModelSpec, ReLU, init_params, loss_and_grads

pytestmark = pytest.mark.acceptance

BACKBONE = ModelSpec((32,), [Dense("fc1", 32, 16), ReLU(), Dense("fc2", 16, 16), ReLU()])


def _synthetic_sites(sizes, seed):
    cfg = default_synthetic_config()
    data = generate_synthetic(cfg, sizes, seed)
    return [SiteSpec(s.site_id, BACKBONE, ds) for s, ds in zip(cfg.sites, data)]


def test_01_one_site_identity():
    with criterion(1, "one-site federated run == local training, bit-exact", 10) as info:
        site = _synthetic_sites([200, 1], seed=1)[0]
        checked = 0
        for seed, ft in ((0, 0), (7, 3)):
            cfg = FederationConfig(rounds=5, fine_tune_epochs=ft, seed=seed)
            fed = run_federated(cfg, [site]).sites[site.site_id].full_params()
            loc = run_local(cfg, [site]).sites[site.site_id].full_params()
            assert params_equal(fed, loc), f"seed {seed}: federated and local parameters differ"
            checked += sum(v.size for v in fed.values())
        info["detail"] = f"{checked} coordinates equal over 2 configs"


class _HeadWatch(Observer):
    def __init__(self):
        self.events = 0
        self.mismatch = []

    def before_aggregate(self, r, sites):
        self._before = {s: {k: v.copy() for k, v in st.params.head.items()} for s, st in sites.items()}

    def after_broadcast(self, r, sites):
        self.events += 1
        for s, st in sites.items():
            if not params_equal(self._before[s], st.params.head):
                self.mismatch.append((r, s))


def test_02_head_isolation():
    with criterion(2, "heads bit-equal across every aggregation (3 sites, 5 rounds)", 30) as info:
        cfg = default_synthetic_config()
        data = generate_synthetic(cfg, (150, 300), seed=2)
        # a third site labeled like site A from a different draw
        extra = generate_synthetic(cfg, (120, 1), seed=3)[0]
        sites = [SiteSpec("A", BACKBONE, data[0]), SiteSpec("B", BACKBONE, data[1]), SiteSpec("C", BACKBONE, extra)]
        watch = _HeadWatch()
        run_federated(FederationConfig(rounds=5, seed=2), sites, watch)
        assert watch.events == 5
        assert not watch.mismatch, f"head changed across aggregation at {watch.mismatch}"
        info["detail"] = "15 site-round checks"


def _reference_mean(stack, weights=None):
    arr = np.stack(stack)
    if weights is None:
        return arr.mean(axis=0)
    w = np.asarray(weights, dtype=float)
    return np.tensordot(w / w.sum(), arr, axes=1)


def test_03_aggregation_oracle():
    with criterion(3, "aggregation matches reference mean within 1e-12, order-invariant", 5) as info:
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(100):
            n_sites = int(rng.integers(1, 7))
            shapes = {f"l{i}.weight": tuple(int(d) for d in rng.integers(1, 6, size=rng.integers(1, 3))) for i in range(int(rng.integers(1, 4)))}
            ups = [
                (f"s{j}", {k: rng.normal(scale=rng.uniform(0.1, 10), size=s) for k, s in shapes.items()}, int(rng.integers(1, 1000)))
                for j in range(n_sites)
            ]
            for mode in Aggregation:
                got = aggregate(ups, mode)
                w = None if mode is Aggregation.UNWEIGHTED_MEAN else [u[2] for u in ups]
                for k in shapes:
                    ref = _reference_mean([u[1][k] for u in ups], w)
                    worst = max(worst, float(np.max(np.abs(got[k] - ref))))
                for _ in range(3):
                    perm = rng.permutation(n_sites)
                    assert params_equal(aggregate([ups[i] for i in perm], mode), got), "arrival order changed the result"
        assert worst <= 1e-12, f"max deviation {worst:.3e}"
        info["detail"] = f"max |diff| {worst:.1e}"


def test_04_gradient_check():
    with criterion(4, "Dense+ReLU+Dense weighted-BCE gradients vs central differences (h=1e-6)", 30) as info:
        rng = np.random.default_rng(4)
        worst = 0.0
        done = 0
        while done < 20:
            d, h, L, n = (int(v) for v in (rng.integers(2, 7), rng.integers(2, 9), rng.integers(1, 5), rng.integers(1, 7)))
            spec = ModelSpec((d,), [Dense("fc1", d, h), ReLU(), Dense("head", h, L)])
            params = init_params(spec, int(rng.integers(2**31)))
            params["fc1.bias"] = rng.normal(scale=0.3, size=h)
            params["head.bias"] = rng.normal(scale=0.3, size=L)
            x = rng.normal(size=(n, d))
            pre = x @ params["fc1.weight"] + params["fc1.bias"]
            if np.min(np.abs(pre)) < 1e-4:
                continue  # the ReLU kink sits inside the difference stencil; redraw
            y = rng.integers(0, 2, size=(n, L))
            cfg = LossConfig(tuple(rng.uniform(0.2, 8.0, size=L)))
            _, grads = loss_and_grads(spec, params, x, y, cfg)
            fd = finite_difference_grads(spec, params, x, y, cfg, h=1e-6)
            worst = max(worst, max_relative_error(grads, fd))
            done += 1
        assert worst < 1e-4, f"max relative error {worst:.3e}"
        info["detail"] = f"max rel err {worst:.1e} over 20 instances"


def test_05_auroc_youden_oracles():
    with criterion(5, "AUROC and Youden match O(n^2) / exhaustive oracles (500 instances)", 10) as info:
        assert auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
        t, j = youden_index([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert (t, j) == (0.35, 0.5)
        rng = np.random.default_rng(5)
        ties = 0
        for _ in range(500):
            n = int(rng.integers(2, 201))
            y = rng.integers(0, 2, size=n)
            y[0], y[1] = 0, 1
            levels = int(rng.integers(2, 30))
            scores = rng.integers(0, levels, size=n) / levels if rng.random() < 0.5 else rng.random(n)
            ties += len(np.unique(scores)) < n
            assert auroc(scores, y) == brute_auroc(scores, y)
            assert youden_index(scores, y) == brute_youden(scores, y)
        info["detail"] = f"exact on 500 instances ({ties} with tied scores)"


def test_06_bootstrap_contract():
    with criterion(6, "bootstrap B=1000 deterministic; identical p>=0.5; dominance p=1/1001", 60) as info:
        rng = np.random.default_rng(6)
        y = rng.integers(0, 2, size=(120, 3))
        y[:2] = [[0, 0, 0], [1, 1, 1]]
        noisy = ScoreSet(y + rng.normal(scale=0.8, size=y.shape), y, ("a", "b", "c"))
        s1 = bootstrap_spread(noisy, macro_auroc, B=1000, seed=11)
        s2 = bootstrap_spread(noisy, macro_auroc, B=1000, seed=11)
        assert s1 == s2, "same seed gave different bootstrap results"
        assert bootstrap_spread(noisy, macro_auroc, B=1000, seed=12) != s1
        p_same = paired_bootstrap_pvalue(noisy, noisy, macro_auroc, B=1000, seed=11)
        assert p_same >= 0.5
        assert p_same == paired_bootstrap_pvalue(noisy, noisy, macro_auroc, B=1000, seed=11)
        perfect = ScoreSet(y.astype(float), y, ("a", "b", "c"))
        p_dom = paired_bootstrap_pvalue(perfect, noisy, macro_auroc, B=1000, seed=11)
        assert p_dom == 1 / 1001, f"p = {p_dom}"
        info["detail"] = f"p_same={p_same:.3f}, p_dominant={p_dom:.6f}"


def test_07_directional_ffl_benefit():
    with criterion(7, "small-site macro AUROC: FFL > local in >=7/10 seeds, mean gain > 0.01", 1800) as info:
        diffs = []
        for seed in range(10):
            cfg = default_experiment_config(seed=seed)
            fed = run_experiment(cfg).sites["A"].report.macro_auroc
            loc = run_experiment(cfg.model_copy(update={"mode": "local"})).sites["A"].report.macro_auroc
            diffs.append(fed - loc)
            print(f"  seed {seed}: FFL {fed:.4f}  local {loc:.4f}  diff {fed - loc:+.4f}", flush=True)
        wins = sum(d > 0 for d in diffs)
        mean = float(np.mean(diffs))
        info["detail"] = f"wins {wins}/10, mean gain {mean:+.4f}"
        assert wins >= 7 and mean > 0.01, info["detail"]


def test_08_transport_equivalence():
    with criterion(8, "inproc and tcp runs give bit-identical models and metrics", 300) as info:
        cfg = default_experiment_config(seed=8)
        a = run_experiment(cfg)
        b = run_experiment(cfg.model_copy(update={"transport": "tcp"}))
        for sid in a.sites:
            assert a.sites[sid].model_digest == b.sites[sid].model_digest, f"site {sid}: models differ"
            assert a.sites[sid].report == b.sites[sid].report, f"site {sid}: metrics differ"
            assert a.sites[sid].test_scores.tobytes() == b.sites[sid].test_scores.tobytes()
        assert a.history == b.history
        info["detail"] = f"{len(a.sites)} sites, {a.history['rounds_completed']} rounds"


def _random_message(rng):
    kind = int(rng.integers(5))
    if kind == 0:
        return Register("site-" + "".join(rng.choice(list("abcé✓"), size=rng.integers(0, 8))), int(rng.integers(2**32)))
    if kind in (1, 2):
        params = {}
        for i in range(int(rng.integers(0, 8))):
            shape = tuple(int(d) for d in rng.integers(0, 6, size=rng.integers(0, 4)))
            raw = rng.integers(0, 2**64, size=shape, dtype=np.uint64)
            params[f"layer{i}.{'weight' if i % 2 else 'bias'}"] = raw.view(np.float64)
        if kind == 1:
            return GlobalBackbone(int(rng.integers(2**32)), params)
        loss = struct.unpack("<d", rng.bytes(8))[0]
        return LocalBackbone(int(rng.integers(2**32)), f"s{rng.integers(99)}", params, int(rng.integers(2**32)), loss)
    return EnterFineTune() if kind == 3 else Shutdown()


def test_09_wire_protocol():
    with criterion(9, "wire round-trip bit-exact on 1000 messages; distinct malformed-frame errors", 5) as info:
        rng = np.random.default_rng(9)
        for _ in range(1000):
            m = _random_message(rng)
            frame = encode_message(m)
            back = decode_message(frame)
            assert back == m and encode_message(back) == frame
        good = encode_message(GlobalBackbone(1, {"a.weight": np.arange(6.0).reshape(2, 3)}))
        cases = {
            BadMagicError: b"FFL2" + good[4:],
            BadVersionError: good[:4] + b"\x07" + good[5:],
            UnknownMessageTypeError: good[:5] + b"\x00" + good[6:],
            TruncatedFrameError: good[:-3],
        }
        raised = {}
        for kind, frame in cases.items():
            with pytest.raises(ProtocolError) as exc:
                decode_message(frame)
            assert type(exc.value) is kind, f"{kind.__name__} expected, got {type(exc.value).__name__}"
            raised[kind] = type(exc.value)
        with pytest.raises(TruncatedFrameError):
            decode_message(good[:6])
        assert len(set(raised.values())) == 4
        info["detail"] = "4 distinct error types"


def test_10_preprocessing():
    with criterion(10, "min-max example, hist-eq monotonic, constant guards, range [0,255]", 5) as info:
        assert minmax_normalize(np.array([[10, 20, 30]])).tolist() == [[0, 127, 255]]
        rng = np.random.default_rng(10)
        for _ in range(100):
            shape = tuple(int(v) for v in rng.integers(1, 40, size=2))
            img = rng.integers(0, int(rng.integers(1, 257)), size=shape).astype(np.uint8)
            out = hist_equalize(img)
            assert out.dtype == np.uint8 and out.shape == img.shape
            order = np.argsort(img, axis=None, kind="stable")
            assert np.all(np.diff(out.reshape(-1)[order].astype(int)) >= 0), "equalization broke pixel order"
            raw = rng.normal(scale=rng.uniform(0.1, 1e4), size=shape)
            mm = minmax_normalize(raw)
            assert mm.min() >= 0 and mm.max() <= 255
        const = np.full((5, 7), 77, dtype=np.uint8)
        assert np.all(minmax_normalize(const.astype(float) * 3.3) == 0)
        assert np.array_equal(hist_equalize(const), const)
        info["detail"] = "100 random images"


def test_11_binarization_tables():
    with criterion(11, "CheXpert and UKA binarization tables", 1) as info:
        chexpert = {"positive": 1, "negative": 0, "uncertain": 0, "not mentioned": 0}
        uka = {"negative": 0, "uncertain": 0, "mild": 1, "moderate": 1, "severe": 1}
        cardio = {"normal": 0, "uncertain": 0, "borderline": 1, "enlarged": 1, "massively enlarged": 1}
        for k, v in chexpert.items():
            assert binarize_chexpert(k) == v, k
        for k, v in uka.items():
            assert binarize_uka(k, is_cardiomegaly=False) == v, k
        for k, v in cardio.items():
            assert binarize_uka(k, is_cardiomegaly=True) == v, k
        info["detail"] = f"{len(chexpert) + len(uka) + len(cardio)} mappings"


def test_12_patient_wise_split():
    with criterion(12, "zero patient overlap between train and test (100 datasets)", 5) as info:
        rng = np.random.default_rng(12)
        records = 0
        for i in range(100):
            n_pat = int(rng.integers(2, 80))
            counts = rng.integers(1, 5, size=n_pat)
            pids = np.repeat([f"p{j}" for j in range(n_pat)], counts)
            rng.shuffle(pids)
            n = len(pids)
            L = int(rng.integers(1, 4))
            ds = MultilabelDataset(rng.normal(size=(n, 3)), rng.integers(0, 2, size=(n, L)), [f"l{k}" for k in range(L)], list(pids))
            tr, te = split_train_test(ds, float(rng.uniform(0.1, 0.5)), seed=i)
            assert not set(tr.patient_ids) & set(te.patient_ids)
            assert len(tr) + len(te) == n
            records += n
        info["detail"] = f"{records} records"
