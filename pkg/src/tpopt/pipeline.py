"""Staged experiment pipeline with content-hashed manifests.

Stages and the artifacts they write under the output directory::

    generate   data/{train,validation,test,embed}/
    embed      embedding/
    jacobians  field/
    tune       tune/
    train      models/K<k>/
    mf         mf/n<n>/
    eval       eval/
    lab        lab/
    report     report/

Every stage also writes ``manifests/<stage>.json`` with the hashes of the
files it read and wrote, the wall time and the configuration fingerprint.
Artifacts never contain timings, so rerunning a stage under the same seed
reproduces them byte for byte.
"""

import os
import time

import numpy as np

from .config import ExperimentConfig, config_dict
from .counting import MultiplyCounter
from .data_io import (dump_json, load_bundle, load_dataset, load_idx, save_bundle, save_dataset,
                      tree_hashes)
from .embedding import EmbeddingModel, GridConfig, QuantizationGrid, build_grid, embed, fit_pca
from .errors import ConfigurationError, ContractViolation, StageDependencyError
from .evaluation import (auc, config_hash, roc, rows_from_csv, rows_to_csv, series_csv,
                         tradeoff_sweep)
from .families import AnalyticCurve, ChirpFamily, ImageFamily, TorusFamily
from .jacobian import JacobianField, RbfKernel, build_field
from .matched_filter import TemplateBank, select_best_bank
from .observation import DatasetConfig, make_dataset
from .optimizer import Schedule, greedy_search, tpopt_batch, tpopt_cost
from .riemannian import (THEORY_STEP, covering_count, loglog_slope, measure_contraction,
                         noisy_trace, plateau_scaling, riemannian_gd, theory_noise, tradeoff_table)
from .unrolled import (TrainConfig, UnrolledModel, init_from_field, label_argmax, train,
                       unrolled_statistic)

STAGES = ("generate", "embed", "jacobians", "tune", "train", "mf", "eval", "lab", "report")

# test-time neighbor count; the budget formulas below assume it
TEST_NEIGHBORS = 1


# ----------------------------------------------------------------------------
# construction from config


def build_family(cfg: ExperimentConfig):
    fc = cfg.family
    if fc.kind == "chirp":
        return ChirpFamily(fc.f0_range, fc.chirp_rate_range, fc.duration, fc.sample_rate,
                           fc.peak_position, fc.rise_fraction, fc.envelope, fc.phase_origin)
    if fc.kind == "image":
        if not fc.idx_images:
            raise ConfigurationError("image family needs family.idx_images")
        images = load_idx(fc.idx_images).images()
        if fc.idx_labels:
            labels = load_idx(fc.idx_labels).data
            images = images[labels == fc.digit]
        if images.shape[0] == 0:
            raise ConfigurationError(f"no images of digit {fc.digit}")
        return ImageFamily(images[0], fc.max_shift, fc.max_angle)
    raise ConfigurationError(f"unknown family kind {fc.kind!r}")


def bank_size(K, dim):
    """Template count with the same test-time cost as ``K`` TpopT layers."""
    return K * dim * TEST_NEIGHBORS + 1


# ----------------------------------------------------------------------------
# artifact helpers


class Pipeline:
    def __init__(self, cfg: ExperimentConfig, out_dir=None):
        self.cfg = cfg
        self.out = out_dir if out_dir is not None else cfg.output_dir
        self.fingerprint = config_hash(config_dict(cfg))
        self._family = None

    @property
    def family(self):
        if self._family is None:
            self._family = build_family(self.cfg)
        return self._family

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def require(self, *parts):
        p = self.path(*parts)
        if not os.path.exists(os.path.join(p, "meta.json")) and not os.path.isfile(p):
            raise StageDependencyError(f"missing upstream artifact {p}; run the producing stage first")
        return p

    def write_text(self, rel, text):
        p = self.path(rel)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        with open(p, "w") as fh:
            fh.write(text)

    def run(self, stage):
        if stage not in STAGES:
            raise ConfigurationError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
        t0 = time.perf_counter()
        inputs, outputs = getattr(self, f"stage_{stage}")()
        wall = time.perf_counter() - t0
        manifest = {
            "stage": stage,
            "seed": self.cfg.seed,
            "config_hash": self.fingerprint,
            "wall_time_s": wall,
            "inputs": {rel: tree_hashes(self.path(rel)) for rel in inputs},
            "outputs": {rel: tree_hashes(self.path(rel)) for rel in outputs},
        }
        self.write_text(os.path.join("manifests", f"{stage}.json"), dump_json(manifest))
        return manifest

    def run_all(self, stages=STAGES):
        return [self.run(s) for s in stages]

    # -- loaders ---------------------------------------------------------------

    def load_data(self, split):
        return load_dataset(self.require("data", split))

    def load_embedding(self):
        arrays, meta = load_bundle(self.require("embedding"))
        model = EmbeddingModel(arrays["mean"], arrays["components"], arrays["singular_values"],
                               meta["n_samples"])
        grid = QuantizationGrid(arrays["grid_points"], arrays["grid_signals"], meta["grid_kind"],
                                arrays["sample_index"], arrays["assign_dist"],
                                arrays.get("bounds"), meta.get("intervals"))
        return model, grid, arrays["sample_xi"]

    def load_field(self, grid):
        arrays, meta = load_bundle(self.require("field"))
        if not np.array_equal(arrays["anchors"], grid.points):
            raise ContractViolation("field anchors differ from the embedding grid")
        return JacobianField(arrays["anchors"], arrays["raw"], arrays["anchor_signals"],
                             meta["kernel"], meta["ridge"], grid.index)

    def load_schedule(self):
        arrays, meta = load_bundle(self.require("tune"))
        sched = Schedule.from_dict(meta["schedule"])
        sched.history = arrays["history"].tolist()
        return sched

    def load_model(self, K, grid):
        arrays, meta = load_bundle(self.require("models", f"K{K}"))
        return UnrolledModel(arrays["anchors"], arrays["weights"], arrays["bandwidths"],
                             meta["neighbors"], arrays["xi0"], grid.index, grid.signals)

    def load_bank(self, n):
        arrays, meta = load_bundle(self.require("mf", f"n{n}"))
        return TemplateBank(arrays["templates"], meta["seed"], meta["draw"])

    # -- stages ----------------------------------------------------------------

    def stage_generate(self):
        dc, fam, seed = self.cfg.data, self.family, self.cfg.seed
        specs = {
            "train": DatasetConfig(dc.n_train, 0, dc.sigma, dc.amplitude, "train"),
            "validation": DatasetConfig(dc.n_val_pos, dc.n_val_neg, dc.sigma, dc.amplitude,
                                        "validation"),
            "test": DatasetConfig(dc.n_test_pos, dc.n_test_neg, dc.sigma, dc.amplitude, "test"),
            # noiseless signals for the embedding and the Jacobians
            "embed": DatasetConfig(dc.n_embed, 0, 0.0, dc.amplitude, "embed"),
        }
        outs = []
        for split, spec in specs.items():
            save_dataset(self.path("data", split), make_dataset(fam, spec, seed))
            outs.append(os.path.join("data", split))
        return [], outs

    def stage_embed(self):
        ec = self.cfg.embedding
        samples = self.load_data("embed").x
        model = fit_pca(samples, ec.dim)
        xi = embed(model, samples)
        grid = build_grid(model, samples, GridConfig(ec.grid, ec.intervals, ec.n_subset,
                                                     self.cfg.seed), embedded=xi)
        arrays = {"mean": model.mean, "components": model.components,
                  "singular_values": model.singular_values, "sample_xi": xi,
                  "grid_points": grid.points, "grid_signals": grid.signals,
                  "sample_index": grid.sample_index, "assign_dist": grid.assign_dist}
        if grid.bounds is not None:
            arrays["bounds"] = grid.bounds
        meta = {"n_samples": model.n_samples, "grid_kind": grid.kind, "intervals": grid.intervals,
                "dim": ec.dim}
        save_bundle(self.path("embedding"), arrays, meta)
        return [os.path.join("data", "embed")], ["embedding"]

    def stage_jacobians(self):
        jc = self.cfg.jacobians
        samples = self.load_data("embed").x
        _, grid, xi = self.load_embedding()
        kernel = RbfKernel(jc.bandwidth, n_neighbors=jc.neighbors)
        ridge = jc.ridge if jc.ridge == "auto" else float(jc.ridge)
        fld = build_field(grid, xi, samples, kernel, ridge)
        save_bundle(self.path("field"),
                    {"anchors": fld.anchors, "raw": fld.raw, "anchor_signals": fld.anchor_signals},
                    {"kernel": fld.kernel, "ridge": jc.ridge})
        return [os.path.join("data", "embed"), "embedding"], ["field"]

    def stage_tune(self):
        tc = self.cfg.tune
        _, grid, _ = self.load_embedding()
        fld = self.load_field(grid)
        xs = self.load_data("train").positives[: tc.n_tune]
        labels = grid.points[label_argmax(grid.signals, xs)] if tc.objective == "param_error" else None
        sched = greedy_search(xs, fld, grid, tc.steps, tc.bandwidths, tc.layers, tc.neighbors,
                              objective=tc.objective, labels=labels, monotone=tc.monotone,
                              mode=tc.mode)
        save_bundle(self.path("tune"), {"history": np.array(sched.history)},
                    {"schedule": sched.to_dict(), "objective": tc.objective, "mode": tc.mode})
        return [os.path.join("data", "train"), "embedding", "field"], ["tune"]

    def _layers(self):
        layers = sorted(set(int(k) for k in self.cfg.eval.layers))
        if not layers or layers[0] < 1 or layers[-1] > self.cfg.tune.layers:
            raise ConfigurationError("eval.layers must lie in 1..tune.layers")
        return layers

    def stage_train(self):
        ts = self.cfg.train
        _, grid, _ = self.load_embedding()
        fld = self.load_field(grid)
        sched = self.load_schedule()
        xs = self.load_data("train").positives
        labels = grid.points[label_argmax(grid.signals, xs)]
        tcfg = TrainConfig(ts.learning_rate, ts.batch_size, ts.epochs, ts.beta1, ts.beta2, ts.eps,
                           self.cfg.seed, ts.train_bandwidths)
        inputs = [os.path.join("data", "train"), "embedding", "field", "tune"]
        scores, select = [], None
        if ts.select_every > 0:
            # checkpoint selection by validation AUC at the test-time neighbor count
            val = self.load_data("validation")
            pos = val.y == 1
            inputs.insert(1, os.path.join("data", "validation"))

            def select(m):
                stat, _, _ = unrolled_statistic(m.with_neighbors(TEST_NEIGHBORS), val.x)
                scores.append(auc(stat[pos], stat[~pos]))
                return scores[-1]
        outs = []
        for K in self._layers():
            start = init_from_field(fld, sched.prefix(K), neighbors=ts.neighbors)
            scores.clear()
            model, history = train(start, xs, labels, tcfg, select, ts.select_every)
            rel = os.path.join("models", f"K{K}")
            arrays = {"anchors": model.anchors, "weights": model.weights,
                      "bandwidths": model.bandwidths, "xi0": model.xi0,
                      "loss_history": np.array(history)}
            meta = {"K": K, "neighbors": model.neighbors, "epochs": ts.epochs,
                    "train_config": {k: v for k, v in vars(tcfg).items()}}
            if scores:
                arrays["selection_auc"] = np.array(scores)
                meta["selected_step"] = int(np.argmax(scores)) * ts.select_every
                meta["select_every"] = ts.select_every
            save_bundle(self.path(rel), arrays, meta)
            self.write_text(os.path.join(rel, "loss_history.csv"),
                            series_csv({"epoch": list(range(1, len(history) + 1)),
                                        "loss": [float(h) for h in history]}))
            outs.append(rel)
        return inputs, outs

    def stage_mf(self):
        val = self.load_data("validation")
        test = self.load_data("test")
        dim = self.cfg.embedding.dim
        outs = []
        for K in self._layers():
            n = bank_size(K, dim)
            bank, aucs = select_best_bank(self.family, n, self.cfg.mf.n_draws, val, self.cfg.seed,
                                          return_aucs=True)
            rel = os.path.join("mf", f"n{n}")
            save_bundle(self.path(rel), {"templates": bank.templates, "validation_auc": aucs},
                        {"n_templates": n, "seed": bank.seed, "draw": bank.draw,
                         "n_draws": self.cfg.mf.n_draws})
            curve = roc((test.positives @ bank.templates.T).max(axis=1),
                        (test.negatives @ bank.templates.T).max(axis=1))
            self.write_text(os.path.join(rel, "roc.csv"),
                            series_csv({"fpr": curve.fpr, "tpr": curve.tpr}))
            outs.append(rel)
        return [os.path.join("data", "validation"), os.path.join("data", "test")], outs

    def stage_eval(self):
        test = self.load_data("test")
        _, grid, _ = self.load_embedding()
        fld = self.load_field(grid)
        sched = self.load_schedule()
        dim, big_d = fld.dim, fld.ambient_dim
        layers = self._layers()
        banks = {bank_size(K, dim): self.load_bank(bank_size(K, dim)) for K in layers}
        mode = self.cfg.tune.mode

        def untrained(K):
            s = sched.prefix(K).with_neighbors(TEST_NEIGHBORS)

            def run(X):
                counter = MultiplyCounter()
                out = tpopt_batch(X, fld, grid, s, mode, counter)
                return out["statistic"], _per_obs(counter, X, s.n_inits, K, dim, big_d), \
                    TEST_NEIGHBORS, s.n_inits
            return run

        def trained(K):
            model = self.load_model(K, grid).with_neighbors(TEST_NEIGHBORS)

            def run(X):
                counter = MultiplyCounter()
                stat, _, _ = unrolled_statistic(model, X, counter)
                return stat, _per_obs(counter, X, 1, K, dim, big_d), TEST_NEIGHBORS, 1
            return run

        captured = {}

        def keep(key, run):
            # tradeoff_sweep scores positives first, then negatives
            def wrapped(X):
                out = run(X)
                captured.setdefault(key, []).append(out[0])
                return out
            return wrapped

        detectors = {}
        for K in layers:
            for method, make in (("tpopt_untrained", untrained), ("tpopt_trained", trained)):
                detectors[(method, K)] = keep((method, K), make(K))
        rows = tradeoff_sweep(test, banks, detectors, self.cfg.seed, self.fingerprint)
        self.write_text(os.path.join("eval", "tradeoff.csv"), rows_to_csv(rows))
        for (method, K), (sp, sn) in captured.items():
            curve = roc(sp, sn)
            self.write_text(os.path.join("eval", f"roc_{method}_K{K}.csv"),
                            series_csv({"fpr": curve.fpr, "tpr": curve.tpr}))
        by = {(r.method, r.budget): r.auc for r in rows}
        comparisons = []
        for K in layers:
            budget = tpopt_cost(1, K, dim, TEST_NEIGHBORS, big_d)
            a_mf = by[("mf", budget)]
            a_un = by[("tpopt_untrained", budget)]
            a_tr = by[("tpopt_trained", budget)]
            comparisons.append({"K": K, "budget": budget, "n_templates": bank_size(K, dim),
                                "auc_mf": a_mf, "auc_untrained": a_un, "auc_trained": a_tr,
                                "trained_ge_mf": bool(a_tr >= a_mf),
                                "trained_ge_untrained": bool(a_tr >= a_un)})
        summary = {"seed": self.cfg.seed, "config_hash": self.fingerprint,
                   "comparisons": comparisons}
        save_bundle(self.path("eval"), {}, {"summary": summary})
        return ([os.path.join("data", "test"), "embedding", "field", "tune"]
                + [os.path.join("models", f"K{K}") for K in layers]
                + [os.path.join("mf", f"n{n}") for n in banks]), ["eval"]

    def stage_lab(self):
        lc = self.cfg.lab
        big_d = lc.ambient_dim
        seeds = [self.cfg.seed * 1000 + i for i in range(lc.n_seeds)]
        contraction_rows, plateau_rows = [], []
        for kappa in lc.kappas:
            curve = AnalyticCurve.small_circle(kappa, big_d)
            sigma = theory_noise(kappa, big_d)
            start = 0.5 / kappa
            traces = [noisy_trace(curve, sigma, s, start, THEORY_STEP, lc.iters, side)
                      for s in seeds for side in (1.0, -1.0)]
            rep = measure_contraction(traces)
            clean = riemannian_gd(curve, curve.point(0.0), start, THEORY_STEP, lc.iters)
            hit = np.flatnonzero(clean.dist_true < 1e-6)
            contraction_rows.append({
                "kappa": kappa, "sigma": sigma, "max_ratio": rep.max_ratio,
                "n_counted": rep.n_counted, "mean_floor": float(np.mean(rep.floors)),
                "noiseless_final": float(clean.dist_true[-1]),
                "noiseless_iters_to_1e-6": int(hit[0]) if hit.size else -1,
            })
            ps = plateau_scaling(curve, sigma, seeds, start, THEORY_STEP, lc.iters)
            plateau_rows.append({"kappa": kappa, "sigma": sigma, **ps})
        covering_rows = []
        slopes = {}
        radii = [float(r) for r in lc.covering_radii]
        for name, fam, dim in (("curve", AnalyticCurve.great_circle(big_d), 1),
                               ("torus", TorusFamily(ambient_dim=big_d), 2)):
            budget = 20000 if dim == 1 else 40000
            counts = [covering_count(fam, r, budget).count for r in radii]
            slopes[name] = {"d": dim, "slope": loglog_slope(radii, counts)}
            covering_rows += [{"manifold": name, "d": dim, "radius": r, "count": c}
                              for r, c in zip(radii, counts)]
        curve = AnalyticCurve.small_circle(lc.kappas[0], big_d)
        table = tradeoff_table(curve, lc.tradeoff_radii)
        iters = [e.iterations for e in table if e.radius < 1.0 / curve.curvature]
        increments = np.diff(iters).tolist() if len(iters) > 1 else []
        self.write_text(os.path.join("lab", "contraction.csv"), _records_csv(contraction_rows))
        self.write_text(os.path.join("lab", "plateau.csv"), _records_csv(plateau_rows))
        self.write_text(os.path.join("lab", "covering.csv"), _records_csv(covering_rows))
        self.write_text(os.path.join("lab", "tradeoff.csv"),
                        _records_csv([vars(e) for e in table]))
        summary = {"contraction": contraction_rows, "plateau": plateau_rows,
                   "covering_slopes": slopes, "iteration_increments": increments}
        save_bundle(self.path("lab"), {}, {"summary": summary})
        return [], ["lab"]

    def stage_report(self):
        evald = self.require("eval")
        _, meta = load_bundle(evald)
        with open(os.path.join(evald, "tradeoff.csv")) as fh:
            rows = rows_from_csv(fh.read())
        inputs = ["eval"]
        report = {"config_hash": self.fingerprint, "seed": self.cfg.seed,
                  "comparisons": meta["summary"]["comparisons"]}
        if os.path.exists(self.path("lab", "meta.json")):
            _, lab = load_bundle(self.path("lab"))
            report["lab"] = lab["summary"]
            inputs.append("lab")
        save_bundle(self.path("report"), {}, {"report": report})
        self.write_text(os.path.join("report", "tradeoff.csv"), rows_to_csv(rows))
        return inputs, ["report"]


def _per_obs(counter, X, M, K, dim, big_d):
    n = np.atleast_2d(X).shape[0]
    expected = tpopt_cost(M, K, dim, TEST_NEIGHBORS, big_d)
    if counter.count != n * expected:
        raise ContractViolation(
            f"instrumented multiplies {counter.count} != {n} x {expected}")
    return expected


def _records_csv(records):
    if not records:
        return ""
    cols = list(records[0])
    return series_csv({c: [r[c] for r in records] for c in cols})


def run_pipeline(cfg, out_dir=None, stages=STAGES):
    pipe = Pipeline(cfg, out_dir)
    return pipe.run_all(stages)


def load_summary(out_dir):
    _, meta = load_bundle(os.path.join(out_dir, "eval"))
    return meta["summary"]
