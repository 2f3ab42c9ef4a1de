#!/usr/bin/env python3
"""Writes the synthetic fixture corpus under data/fixtures.

Output is a pure function of SEED; rerunning reproduces the files byte for byte.
"""

import argparse
import csv
import io
import json
import math
import random
from pathlib import Path

SEED = 20261016

COUNTRIES = [
    # iso3, name, income group, region, gdp per capita
    ("SSD", "South Sudan", "low", "Sub-Saharan Africa", 450),
    ("ETH", "Ethiopia", "low", "Sub-Saharan Africa", 1020),
    ("MOZ", "Mozambique", "low", "Sub-Saharan Africa", 560),
    ("AFG", "Afghanistan", "low", "South Asia", 410),
    ("KEN", "Kenya", "lower_middle", "Sub-Saharan Africa", 2100),
    ("IND", "India", "lower_middle", "South Asia", 2480),
    ("VNM", "Viet Nam", "lower_middle", "East Asia & Pacific", 4300),
    ("EGY", "Egypt", "lower_middle", "Middle East & North Africa", 3500),
    ("CHN", "China", "upper_middle", "East Asia & Pacific", 12600),
    ("BRA", "Brazil", "upper_middle", "Latin America & Caribbean", 9900),
    ("MEX", "Mexico", "upper_middle", "Latin America & Caribbean", 11500),
    ("TUR", "Turkiye", "upper_middle", "Europe & Central Asia", 10600),
    ("USA", "United States", "high", "North America", 81600),
    ("DEU", "Germany", "high", "Europe & Central Asia", 52700),
    ("JPN", "Japan", "high", "East Asia & Pacific", 33800),
    ("GBR", "United Kingdom", "high", "Europe & Central Asia", 48900),
]
INCOME_RANK = {"low": 0, "lower_middle": 1, "upper_middle": 2, "high": 3}

ACTIVITIES = [
    ("0111", "growing cereals crops wheat maize harvesting fields farm"),
    ("1071", "baking bread pastry bakery dough ovens food production"),
    ("2610", "manufacturing electronic components circuit boards assembly"),
    ("4520", "maintenance repair motor vehicles engines diagnostics garage"),
    ("4711", "retail sale stores groceries checkout customers shelves"),
    ("4921", "urban passenger land transport bus routes drivers schedules"),
    ("5610", "restaurants meals cooking serving customers kitchen orders"),
    ("6201", "computer programming software code development testing"),
    ("6419", "banking deposits loans credit accounts financial transactions"),
    ("6920", "accounting bookkeeping audit tax records financial statements"),
    ("8510", "education teaching students lessons classroom instruction"),
    ("8620", "medical practice patients diagnosis clinical treatment records"),
]

VERBS = ["prepare", "review", "operate", "inspect", "record", "plan", "monitor", "explain", "assemble", "schedule"]
GENERIC = ["daily", "reports", "equipment", "quality", "team", "standards", "documents", "safety"]
CHANNELS = ["physical_execution", "rule_based_workflow", "planning_control", "inference_scoring",
            "informational_transformation"]
AI_FUNCTIONS = ["state_inference", "content_transformation", "recommendation_decision_support", "adaptive_control"]
SOCS = ["11-1021", "13-2011", "15-1252", "25-2021", "29-1141", "35-2014", "41-2031", "43-4051", "47-2111", "53-3032"]
ISCO = ["11", "21", "24", "25", "33", "41", "51", "71", "83"]
N_TASKS = 60

SENTENCES = {
    "high": ["Software performs the task with little oversight.", "Routine steps follow fixed rules.",
             "Sensors and scheduling tools handle most of the work."],
    "low": ["The work depends on physical presence.", "Judgment about people dominates the task.",
            "Conditions vary too much for standard tools."],
    "sub": ["Automation replaces the routine core.", "Machines perform the task end to end."],
    "aug": ["Tools help the worker decide faster.", "The worker remains responsible for the outcome."],
    "ai": ["A predictive model scores each case.", "Machine learning classifies the inputs."],
}


def task_rows(rng):
    tasks = []
    for i in range(N_TASKS):
        home = ACTIVITIES[i % len(ACTIVITIES)]
        words = home[1].split()
        rng.shuffle(words)
        text = " ".join([rng.choice(VERBS)] + words[:4] + [rng.choice(GENERIC)])
        tasks.append({
            "task_id": f"T{i + 1:03d}",
            "text": text,
            "propensity": rng.random(),
            "channel": CHANNELS[i % len(CHANNELS)],
            "sub_bias": rng.random(),
        })
    return tasks


def label(rng, task, country_tag, shift):
    level = task["propensity"] * 3.2 + shift + rng.gauss(0, 0.45)
    level = max(0, min(3, int(round(level))))
    exposed = level >= 2
    sub = aug = False
    margin = "unclear"
    margin_raw = None
    channel = "none"
    ai = False
    ai_fn = "none"
    if exposed:
        channel = task["channel"]
        u = rng.random()
        if u < 0.35 * task["sub_bias"] + 0.1:
            margin, sub = "substitute", True
        elif u < 0.75:
            margin, aug = "augment", True
        elif u < 0.93:
            margin, sub, aug = "both", True, True
        else:
            sub, aug = rng.random() < 0.5, rng.random() < 0.5
        ai = rng.random() < 0.45
        if ai:
            ai_fn = rng.choice(AI_FUNCTIONS)
    elif rng.random() < 0.06:
        # Classifier emitted a margin on an unexposed task; ingest normalizes it.
        margin_raw, sub = "substitute", True
    parts = [rng.choice(SENTENCES["high" if exposed else "low"])]
    if sub:
        parts.append(rng.choice(SENTENCES["sub"]))
    if aug:
        parts.append(rng.choice(SENTENCES["aug"]))
    if ai:
        parts.append(rng.choice(SENTENCES["ai"]))
    rec = {
        "task_id": task["task_id"],
        "country": country_tag,
        "exposure_level": level,
        "dominant_channel": channel,
        "substitution_path": sub,
        "augmentation_path": aug,
        "margin": margin_raw or margin,
        "ai_materiality": ai,
        "dominant_ai_function": ai_fn,
        "short_rationale": " ".join(parts),
        "substitution_summary": "Substitution is plausible." if sub else "No clear substitution route.",
        "augmentation_summary": "Augmentation is plausible." if aug else "No clear augmentation route.",
    }
    return rec


def perturb(rng, rec, p):
    out = dict(rec)
    if rng.random() < p:
        lvl = out["exposure_level"] + rng.choice([-1, 1, 1, -2])
        out["exposure_level"] = max(0, min(3, lvl))
        if out["exposure_level"] < 2 and out["margin"] != "unclear" and rng.random() < 0.5:
            out.update(margin="unclear", substitution_path=False, augmentation_path=False,
                       dominant_channel="none", ai_materiality=False, dominant_ai_function="none")
    return out


def jsonl(records):
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def build(rng):
    files = {}
    tasks = task_rows(rng)

    files["registry.csv"] = csv_text(["iso3", "name", "income_group", "region", "gdp_per_capita"],
                                     [list(c) for c in COUNTRIES])
    files["tasks.csv"] = csv_text(["task_id", "text"], [[t["task_id"], t["text"]] for t in tasks])
    files["activities.csv"] = csv_text(["isic4", "text"], [list(a) for a in ACTIVITIES])

    labels = []
    for iso, _, group, _, gdp in COUNTRIES:
        shift = (INCOME_RANK[group] - 1.5) * 0.35 + rng.gauss(0, 0.15)
        for t in tasks:
            labels.append(label(rng, t, iso, shift))
    dup = dict(labels[5])
    dup["short_rationale"] = "Repeated classifier call for the same task."
    extra = [
        dup,
        "{not valid json",
        dict(labels[7], exposure_level=7),
    ]
    lines = jsonl(labels) + jsonl(extra[:1]) + extra[1] + "\n" + jsonl(extra[2:])
    files["labels.jsonl"] = lines

    bench = []
    for tag, shift in [("context_free", 0.0)] + [(f"income_group:{g}", (r - 1.5) * 0.35) for g, r in INCOME_RANK.items()]:
        for t in tasks:
            bench.append(label(rng, t, tag, shift))
    files["benchmark.jsonl"] = jsonl(bench)
    files["run_b.jsonl"] = jsonl([perturb(rng, r, 0.2) for r in labels])
    context_free = [r for r in bench if r["country"] == "context_free"]
    for v in range(1, 4):
        files[f"paraphrase_v{v}.jsonl"] = jsonl([perturb(rng, r, 0.08 + 0.03 * v) for r in context_free])

    weight_rows = []
    for k, soc in enumerate(SOCS):
        ids = [t["task_id"] for t in tasks[6 * k: 6 * k + 6]]
        raw = [rng.randint(1, 9) for _ in ids]
        for tid, w in zip(ids, raw):
            weight_rows.append([soc, tid, repr(w / sum(raw))])
    files["task_weights.csv"] = csv_text(["soc", "task_id", "weight"], weight_rows)

    bridge_rows = []
    for k, soc in enumerate(SOCS):
        primary = ISCO[k % len(ISCO)]
        secondary = ISCO[(k + 3) % len(ISCO)]
        if k % 3 == 0:
            bridge_rows.append([soc, primary, "1"])
        else:
            a = rng.randint(55, 90)
            bridge_rows.append([soc, primary, repr(a / 100)])
            bridge_rows.append([soc, secondary, repr((100 - a) / 100)])
    files["bridge.csv"] = csv_text(["soc", "isco", "share"], bridge_rows)

    emp = []
    cells = ISCO + ["01"]
    for iso, _, group, _, _ in COUNTRIES:
        n_cells = 6 if iso == "AFG" else len(cells)
        base = [rng.randint(50, 900) for _ in cells]
        female_years = [2021, 2023] if iso in ("KEN", "BRA") else [2019, 2020, 2021, 2022, 2023]
        male_years = [2021, 2022] if iso in ("KEN", "BRA") else [2019, 2020, 2021, 2022, 2023]
        for year in range(2019, 2024):
            for sex, years in (("total", range(2019, 2024)), ("female", female_years), ("male", male_years)):
                if year not in years:
                    continue
                for j, cell in enumerate(cells[:n_cells]):
                    tilt = 0.5 + 0.4 * ((j % 4) - 1.5) / 1.5 * (1 if sex == "female" else -1)
                    scale = 1.0 if sex == "total" else tilt
                    emp.append([iso, year, sex, cell, int(base[j] * scale * (1 + 0.02 * (year - 2019))) + 1])
    files["employment.csv"] = csv_text(["iso3", "year", "sex", "cell_id", "count"], emp)

    cov = []
    for iso, _, group, _, gdp in COUNTRIES:
        r = INCOME_RANK[group]
        vals = {
            ("log_gdp_pc", 2024): math.log(gdp),
            ("human_capital", 2019): 1.3 + 0.45 * r + rng.random() * 0.3,
            ("years_schooling", 2015): 3 + 2.6 * r + rng.random() * 2,
            ("capital_intensity", 2019): 0.5 + 0.8 * r + rng.gauss(0, 0.3),
            ("gov_effectiveness", 2024): min(100, 15 + 22 * r + rng.random() * 15),
            ("regulatory_quality", 2024): min(100, 12 + 23 * r + rng.random() * 15),
            ("goods_trade_gdp", 2023): 20 + rng.random() * 80,
        }
        for (var, year), v in vals.items():
            if iso == "MOZ" and var == "capital_intensity":
                continue
            cov.append([iso, var, year, f"{v:.6f}"])
        for year in range(2019, 2024):
            cov.append([iso, "investment_gdp", year, f"{15 + rng.random() * 20:.6f}"])
            cov.append([iso, "internet_users", year, f"{min(100, 10 + 25 * r + 2 * (year - 2019) + rng.random() * 5):.6f}"])
    files["covariates.csv"] = csv_text(["iso3", "variable", "year", "value"], cov)

    by_key = {(r["country"], r["task_id"]): r for r in labels}
    pairs = []
    for k in range(40):
        t = tasks[k % N_TASKS]["task_id"]
        a, b = COUNTRIES[k % 16][0], COUNTRIES[(k * 7 + 3) % 16][0]
        if a == b:
            continue
        ra, rb = by_key[(a, t)], by_key[(b, t)]
        text_b = rb["short_rationale"] + (f" Conditions in {COUNTRIES[(k * 7 + 3) % 16][1]} matter." if k % 5 == 0 else "")
        pairs.append([f"P{k:03d}", ra["short_rationale"], a, text_b, b])
    files["pairs.csv"] = csv_text(["id", "text_a", "country_a", "text_b", "country_b"], pairs)

    files["report.json"] = json.dumps({
        "seed": 20260101,
        "report": {
            "labels": "labels.jsonl",
            "benchmark": "benchmark.jsonl",
            "run-b": "run_b.jsonl",
            "variants": ["paraphrase_v1.jsonl", "paraphrase_v2.jsonl", "paraphrase_v3.jsonl"],
            "registry": "registry.csv",
            "tasks": "tasks.csv",
            "activities": "activities.csv",
            "task-weights": "task_weights.csv",
            "bridge": "bridge.csv",
            "employment": "employment.csv",
            "covariates": "covariates.csv",
            "pairs": "pairs.csv",
            "lexicon": "../consistency_lexicon.json",
            "stopwords": "../stopwords.txt",
        },
        "link": {"candidates": {"top-k": 8, "floor": 0.2}},
        "stats": {
            "forest": {"trees": 200},
            "shap": {"trees": 200},
            "ale": {"trees": 200, "bins": 5},
            "loess": {"resamples": 200},
        },
    }, indent=2) + "\n"
    return files


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in build(random.Random(SEED)).items():
        (out / name).write_text(text, encoding="utf-8", newline="\n")
    print(f"wrote fixtures to {out}")


if __name__ == "__main__":
    main()
