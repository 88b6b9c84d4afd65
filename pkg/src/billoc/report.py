"""Tables and figure data built from persisted stage artifacts only."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy import stats

from . import io, spectra
from .classical import alpha
from .errors import BillocError
from .husimi import window_average


def _lam(tag: str) -> float:
    return float(tag)


def _rational(points) -> dict:
    try:
        fit = spectra.fit_rational(points)
    except BillocError as exc:
        return {"status": "not_fitted", "reason": str(exc), "n_points": len(points)}
    return {"status": "ok", "asymptote": fit.asymptote, "s": fit.s, "residual_rms": fit.residual_rms,
            "n_points": len(points)}


def build_report(pipe, d: Path) -> None:
    cfg = pipe.cfg
    summary: dict = {}
    have = {st: pipe.is_done(st) for st in ("geometry", "transport", "solve", "localize",
                                            "spectra-fit", "beta-fit")}
    src = pipe.stage_dir

    if have["geometry"]:
        rows = io.read_csv(src("geometry") / "geometry.csv")
        io.write_csv(d / "geometry.csv", list(rows[0].keys()), (r.values() for r in rows))

    n_t: dict[float, dict[float, int]] = {}
    if have["transport"]:
        rows = io.read_csv(src("transport") / "transport.csv")
        for r in rows:
            n_t.setdefault(float(r["lambda"]), {})[float(r["criterion"])] = int(r["N_T"])
        fr = sorted({f for v in n_t.values() for f in v})
        io.write_csv(d / "table1_transport.csv", ["lambda"] + [f"N_T_{int(round(100 * f))}" for f in fr],
                     ([lam] + [n_t[lam].get(f, "") for f in fr] for lam in sorted(n_t)))

    # k0 per lambda from the solved spectrum
    k0 = {}
    if have["solve"]:
        for lam in cfg.lambdas:
            ks = io.read_spectrum(src("solve") / f"spectrum_{lam:.6g}.csv")
            if ks.size:
                k0[lam] = float(ks.mean())

    alphas = {}
    for lam in sorted(k0):
        n = n_t.get(lam, {}).get(cfg.alpha_criterion)
        if n:
            alphas[lam] = alpha(None, k0[lam], n)
    if alphas:
        io.write_csv(d / "alpha.csv", ["lambda", "k0", "criterion", "N_T", "alpha"],
                     ((lam, k0[lam], cfg.alpha_criterion, n_t[lam][cfg.alpha_criterion], a)
                      for lam, a in sorted(alphas.items())))

    loc = {}
    if have["localize"]:
        for lam in cfg.lambdas:
            loc[lam] = io.read_jsonl(src("localize") / f"localization_{lam:.6g}.jsonl")
        io.write_csv(d / "fig1_nipr_vs_A.csv", ["lambda", "k", "A", "nIPR", "M", "class"],
                     ((lam, r["k"], r["A"], r["nIPR"], r["M"], r["class"]) for lam in sorted(loc) for r in loc[lam]))
        means, fig1 = [], {}
        for lam in sorted(loc):
            ch = [r for r in loc[lam] if r["class"] == "chaotic"]
            a_m, n_m = window_average([r["A"] for r in ch], [r["nIPR"] for r in ch], cfg.window_states)
            means.extend((lam, x, y) for x, y in zip(a_m, n_m))
            fig1[f"{lam:.6g}"] = _linear(a_m, n_m)
        allx = np.array([m[1] for m in means])
        ally = np.array([m[2] for m in means])
        fig1["pooled"] = _linear(allx, ally)
        io.write_csv(d / "fig1_window_means.csv", ["lambda", "A_mean", "nIPR_mean"], means)
        io.write_json(d / "fig1_fit.json", fig1)

        rows2 = []
        for lam in sorted(loc):
            ch = np.array([r["A_normalized"] for r in loc[lam] if r["class"] == "chaotic"])
            if ch.size:
                rows2.append((lam, alphas.get(lam, math.nan), float(ch.mean()), float(ch.std()), int(ch.size)))
        io.write_csv(d / "fig2_3_A_vs_alpha.csv", ["lambda", "alpha", "mean_A_normalized", "sigma_A_normalized",
                                                    "n_chaotic"], rows2)
        pts = [(r[1], r[2]) for r in rows2 if math.isfinite(r[1])]
        summary["fig2_rational_fit"] = _rational(pts)
        summary["fig3_sigma"] = {f"{r[0]:.6g}": r[3] for r in rows2}

    if have["beta-fit"]:
        beta = io.read_json(src("beta-fit") / "beta.json")
        parts = []
        for tag in sorted(beta, key=float):
            for r in io.read_csv(pipe.stage_dir("beta-fit") / f"PA_{tag}.csv"):
                parts.append((tag, r["A"], r["P_empirical"], r["P_beta"]))
        io.write_csv(d / "fig5_8_PA.csv", ["lambda", "A", "P_empirical", "P_beta"], parts)
        summary["beta_fits"] = {t: {"a": v["params"]["a"], "b": v["params"]["b"], "A0": v["params"]["A0"],
                                    "ks_pvalue": v["ks_pvalue"]} for t, v in beta.items()}

    if have["spectra-fit"]:
        fits = io.read_json(src("spectra-fit") / "fits.json")
        rows9, rows10 = [], []
        for tag in sorted(fits, key=float):
            lam = _lam(tag)
            f = fits[tag]
            bc = f["brb_classical"]["params"]["beta"]
            bq = f["brb_quantum"]["params"]["beta"]
            rq = f["brb_quantum"]["params"]["rho1"]
            meanA = _mean_chaotic(loc.get(lam))
            rows9.append((lam, meanA, bc, bq, f["brody"]["params"]["beta"], f["rho1_classical"], rq))
            rows10.append((lam, alphas.get(lam, math.nan), bc, bq))
        io.write_csv(d / "fig9_beta_vs_A.csv", ["lambda", "mean_A_normalized", "beta_brb_classical",
                                                 "beta_brb_quantum", "beta_brody", "rho1_classical",
                                                 "rho1_quantum"], rows9)
        io.write_csv(d / "fig10_beta_vs_alpha.csv", ["lambda", "alpha", "beta_brb_classical", "beta_brb_quantum"],
                     rows10)
        summary["fig10_rational_fit"] = {
            "classical": _rational([(r[1], r[2]) for r in rows10 if math.isfinite(r[1])]),
            "quantum": _rational([(r[1], r[3]) for r in rows10 if math.isfinite(r[1])]),
        }
    summary["stages_used"] = sorted({st for st, ok in have.items() if ok})
    io.write_json(d / "summary.json", summary)


def _mean_chaotic(rows) -> float:
    if not rows:
        return math.nan
    v = [r["A_normalized"] for r in rows if r["class"] == "chaotic"]
    return float(np.mean(v)) if v else math.nan


def _linear(x, y) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        return {"status": "not_fitted", "n_points": int(x.size)}
    fit = stats.linregress(x, y)
    return {"status": "ok", "slope": fit.slope, "intercept": fit.intercept, "pearson_r": fit.rvalue,
            "n_points": int(x.size)}
