#!/usr/bin/env python3
"""Regenerates fixtures/: a synthetic 60-video diabetes-education corpus with
catalog search results, transcripts, PEMAT rubrics, actor annotations, a lexicon,
a resolver transcript and a pipeline config.

Every video has a latent MED and UND level. Metadata text and transcripts are drawn
from level-dependent word pools, so both feature views carry signal, and the
measured scores (term coverage, PEMAT) agree with the latent levels for the seed set.

Usage: python3 tools/make_fixtures.py [out_dir]
"""

import json
import math
import random
import re
import sys
from pathlib import Path

SEED = 20210815
N_VIDEOS = 60
N_SEEDS = 28

TERMS = [
    "diabetes",
    "insulin resistance",
    "type 2 diabetes diet",
    "blood sugar test",
    "diabetic foot care",
    "prediabetes",
]

LEXICON = {
    "diabetes": "disease",
    "type 2 diabetes": "disease",
    "prediabetes": "disease",
    "insulin resistance": "disease",
    "hypoglycemia": "disease",
    "hyperglycemia": "disease",
    "neuropathy": "disease",
    "retinopathy": "disease",
    "nephropathy": "disease",
    "diabetic ketoacidosis": "disease",
    "foot ulcer": "disease",
    "insulin": "treatment",
    "metformin": "treatment",
    "glp-1 agonist": "treatment",
    "statin": "treatment",
    "sulfonylurea": "treatment",
    "carbohydrate counting": "treatment",
    "a1c": "test",
    "hba1c": "test",
    "fasting glucose": "test",
    "glucose tolerance test": "test",
    "lipid panel": "test",
    "urine albumin": "test",
    "foot exam": "procedure",
    "dilated eye exam": "procedure",
    "bariatric surgery": "procedure",
    "amputation": "procedure",
    "insulin pump": "medical_device",
    "glucose meter": "medical_device",
    "continuous glucose monitor": "medical_device",
    "lancet": "medical_device",
    "pen needle": "medical_device",
    "endocrinologist": "medical_professional",
    "podiatrist": "medical_professional",
    "dietitian": "medical_professional",
    "diabetes educator": "medical_professional",
    "ophthalmologist": "medical_professional",
}

MED_TERMS = [t for t in LEXICON if t not in ("diabetes",)]

# Title/description vocabularies by latent level.
MED_HIGH_WORDS = ["explained", "mechanism", "clinical", "guidelines", "diagnosis", "treatment", "glucose",
                  "pancreas", "dosage", "screening", "complications", "lab", "results", "evidence"]
MED_LOW_WORDS = ["vlog", "routine", "my", "story", "recipe", "kitchen", "motivation", "journey", "family",
                 "weekend", "challenge", "snack", "haul", "tips"]
UND_HIGH_WORDS = ["simple", "beginners", "easy", "step", "basics", "guide", "plain", "quick", "checklist",
                  "everyday", "clear", "practical"]
UND_LOW_WORDS = ["lecture", "pathophysiology", "advanced", "seminar", "grand", "rounds", "board", "review",
                 "molecular", "receptor", "kinetics", "literature"]

FILLER = ("the a and of to in is for on with this that you your we can it be are as at by "
          "from or have what how when today about more some just like".split())
SIMPLE_TALK = "let us go slowly here is one step then the next step you can do this at home every day".split()
JARGON_TALK = ("notwithstanding heterogeneity multifactorial etiology postprandial excursions "
               "counterregulatory hormones beta cell dysfunction hepatic gluconeogenesis").split()

PEMAT_ITEMS = [f"U{i}" for i in range(1, 14)]

CHANNELS = [f"UC{chr(65 + i)}{i:03d}" for i in range(14)]

AGE_BRACKETS = ["under20", "b20_30", "b30_40", "b40_50", "over50"]


def words(rng, pool, n):
    return [rng.choice(pool) for _ in range(n)]


def make_title(rng, med, und):
    w = words(rng, MED_HIGH_WORDS if med else MED_LOW_WORDS, 2) + words(rng, UND_HIGH_WORDS if und else UND_LOW_WORDS, 2)
    # a little cross-talk so the metadata view is informative but not perfect
    if rng.random() < 0.2:
        w.append(rng.choice(MED_LOW_WORDS if med else MED_HIGH_WORDS))
    rng.shuffle(w)
    topic = rng.choice(["diabetes", "blood sugar", "prediabetes", "insulin resistance", "diabetic foot"])
    return f"{topic.title()}: " + " ".join(w)


def make_description(rng, med, und):
    w = words(rng, FILLER, 10)
    w += words(rng, MED_HIGH_WORDS if med else MED_LOW_WORDS, 9)
    w += words(rng, UND_HIGH_WORDS if und else UND_LOW_WORDS, 8)
    if rng.random() < 0.25:
        w += words(rng, MED_LOW_WORDS if med else MED_HIGH_WORDS, 2)
    rng.shuffle(w)
    return " ".join(w).capitalize() + "."


def make_transcript(rng, med, und):
    """Token coverage by lexicon terms lands well above 0.05 for MED-high, below for MED-low."""
    n_tokens = rng.randint(90, 130)
    target = rng.uniform(0.10, 0.22) if med else rng.uniform(0.0, 0.03)
    out = []
    covered = 0
    while len(out) < n_tokens:
        if covered < target * n_tokens and rng.random() < 0.35:
            term = rng.choice(MED_TERMS)
            out.extend(term.split())
            covered += len(re.split(r"[\s\-]+", term))
        else:
            pool = SIMPLE_TALK if und else JARGON_TALK
            out.append(rng.choice(pool) if rng.random() < 0.35 else rng.choice(FILLER))
    return " ".join(out)


def make_rubric(rng, und):
    items = []
    n_na = rng.randint(0, 3)
    applicable = len(PEMAT_ITEMS) - n_na
    agree = rng.randint(math.ceil(0.75 * applicable), applicable) if und else rng.randint(
        math.ceil(0.25 * applicable), math.floor(0.62 * applicable))
    responses = ["agree"] * agree + ["disagree"] * (applicable - agree) + ["na"] * n_na
    rng.shuffle(responses)
    for item, resp in zip(PEMAT_ITEMS, responses):
        items.append((item, resp))
    return items


def iso(rng):
    y = rng.randint(2012, 2020)
    m = rng.randint(1, 12)
    d = rng.randint(1, 28)
    return f"{y:04d}-{m:02d}-{d:02d}T{rng.randint(0, 23):02d}:{rng.randint(0, 59):02d}:00Z"


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures"
    rng = random.Random(SEED)
    (out / "catalog").mkdir(parents=True, exist_ok=True)

    videos = []
    for i in range(N_VIDEOS):
        vid = f"v{i + 1:03d}"
        med = 1 if rng.random() < 0.5 else 0
        und = 1 if rng.random() < 0.55 else 0
        # annotation first: views depend on presenter attributes
        r = rng.random()
        actors = 0 if r < 0.12 else (1 if r < 0.87 else 2)
        gender = "male" if rng.random() < 0.58 else "female"
        face = actors >= 1 and rng.random() < 0.7
        age = rng.choice(AGE_BRACKETS)
        source = "face" if face else ("speech" if actors == 0 else rng.choice(["face", "manual"]))
        ann = {"video_id": vid, "actor_count": actors, "face_visible": face, "gender": gender,
               "age_bracket": age if source != "speech" else "unknown", "detection_source": source,
               "readable": True, "narration": True}
        if actors > 1:
            ann["gender"] = "unknown"
            ann["age_bracket"] = "unknown"
        log_views = 8.0 + 0.7 * (gender == "male") - 0.2 * face + 0.15 * med + 0.1 * und + rng.gauss(0, 0.8)
        views = int(round(math.exp(log_views)))
        rec = {
            "video_id": vid,
            "channel_id": rng.choice(CHANNELS),
            "publish_time": iso(rng),
            "title": make_title(rng, med, und),
            "description": make_description(rng, med, und),
            "tags": words(rng, ["diabetes", "health", "nutrition", "medicine", "wellness", "education"], 3),
            "duration_seconds": rng.randint(90, 1500),
            "definition": "hd" if rng.random() < 0.6 else "sd",
            "captions_available": rng.random() < 0.5,
            "rating": round(rng.uniform(3.5, 5.0), 2),
            "view_count": views,
            "like_count": int(views * rng.uniform(0.01, 0.05)),
            "dislike_count": int(views * rng.uniform(0.0, 0.004)),
            "comment_count": int(views * rng.uniform(0.0, 0.01)),
            "language": "en" if rng.random() < 0.7 else None,
            "channel_title": f"Channel {vid.upper()}",
        }
        if rec["language"] is None:
            del rec["language"]
        if rng.random() < 0.6:
            rec["subscriber_count"] = int(views * rng.uniform(0.5, 5.0))
        videos.append({"rec": rec, "ann": ann, "med": med, "und": und,
                       "transcript": make_transcript(rng, med, und)})

    # exclusion cases for the fairness funnel, on fixed ids
    videos[4]["ann"]["off_topic"] = True
    videos[11]["ann"]["off_topic"] = True
    videos[17]["ann"]["readable"] = False
    videos[23]["ann"]["narration"] = False
    videos[29]["ann"]["narration"] = False
    videos[35]["rec"]["view_count"] = 0
    videos[35]["rec"]["like_count"] = videos[35]["rec"]["dislike_count"] = videos[35]["rec"]["comment_count"] = 0
    for v in videos:
        a = v["ann"]
        if not a["readable"] and a["actor_count"] <= 1:
            a["gender"] = "unknown"
            a["age_bracket"] = "unknown"

    # catalog: each video is returned by one or two search terms; duplicates test dedupe
    per_term = {t: [] for t in TERMS}
    for i, v in enumerate(videos):
        primary = TERMS[i % len(TERMS)]
        per_term[primary].append(v["rec"])
        if rng.random() < 0.3:
            other = rng.choice([t for t in TERMS if t != primary])
            per_term[other].append(v["rec"])
    # records that the language filter must drop
    foreign = [
        {"video_id": "x001", "channel_id": "UCX001", "publish_time": "2019-03-01T10:00:00Z",
         "title": "Diabetes: qué comer", "description": "Guía de alimentación para la diabetes tipo 2.",
         "tags": [], "duration_seconds": 300, "definition": "sd", "captions_available": False,
         "view_count": 1500, "like_count": 10, "dislike_count": 0, "comment_count": 2, "language": "es"},
        {"video_id": "x002", "channel_id": "UCX002", "publish_time": "2018-07-12T09:30:00Z",
         "title": "Диабет: что нужно знать", "description": "Короткий обзор о диабете и инсулине.",
         "tags": [], "duration_seconds": 420, "definition": "hd", "captions_available": True,
         "view_count": 900, "like_count": 5, "dislike_count": 1, "comment_count": 0},
    ]
    per_term["diabetes"].insert(3, foreign[0])
    per_term["prediabetes"].append(foreign[1])
    for term, recs in per_term.items():
        rng.shuffle(recs)
        slug = re.sub(r"_+", "_", re.sub(r"[^a-z0-9]", "_", term.lower())).strip("_")
        with open(out / "catalog" / f"{slug}.jsonl", "w", encoding="utf-8") as f:
            for r in recs:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")

    (out / "terms.txt").write_text("# search terms\n" + "\n".join(TERMS) + "\n", encoding="utf-8")

    with open(out / "lexicon.tsv", "w", encoding="utf-8") as f:
        f.write("# term<TAB>semtype (stand-in for a UMLS extract)\n")
        for term, st in LEXICON.items():
            f.write(f"{term}\t{st}\n")

    with open(out / "transcripts.tsv", "w", encoding="utf-8") as f:
        for v in videos:
            f.write(f"{v['rec']['video_id']}\t{v['transcript']}\n")

    # the expert-labeled seed subset: balanced enough for both dimensions
    order = list(range(N_VIDEOS))
    rng.shuffle(order)
    seeds = sorted(order[:N_SEEDS])
    with open(out / "rubrics.csv", "w", encoding="utf-8") as f:
        f.write("video_id,criterion_id,response\n")
        for i in seeds:
            for item, resp in make_rubric(rng, videos[i]["und"]):
                f.write(f"{videos[i]['rec']['video_id']},{item},{resp}\n")

    # a second rater who disagrees on a few seed videos (for Cohen's kappa)
    with open(out / "second_rater.jsonl", "w", encoding="utf-8") as f:
        for k, i in enumerate(seeds):
            med, und = videos[i]["med"], videos[i]["und"]
            if k % 8 == 3:
                med = 1 - med
            if k % 6 == 1:
                und = 1 - und
            f.write(json.dumps({"video_id": videos[i]["rec"]["video_id"], "med": "high" if med else "low",
                                "und": "high" if und else "low", "source": "human"}) + "\n")

    with open(out / "annotations.jsonl", "w", encoding="utf-8") as f:
        for v in videos:
            f.write(json.dumps(v["ann"]) + "\n")

    with open(out / "resolver.csv", "w", encoding="utf-8") as f:
        f.write("video_id,dimension,label\n")
        for v in videos:
            vid = v["rec"]["video_id"]
            f.write(f"{vid},MED,{'high' if v['med'] else 'low'}\n")
            f.write(f"{vid},UND,{'high' if v['und'] else 'low'}\n")

    with open(out / "truth_labels.jsonl", "w", encoding="utf-8") as f:
        for v in videos:
            f.write(json.dumps({"video_id": v["rec"]["video_id"], "med": "high" if v["med"] else "low",
                                "und": "high" if v["und"] else "low", "source": "human"}) + "\n")

    config = {
        "seed": 7,
        "paths": {"lexicon": "lexicon.tsv", "transcripts": "transcripts.tsv", "rubrics": "rubrics.csv",
                  "annotations": "annotations.jsonl", "catalog": "catalog", "terms": "terms.txt",
                  "resolver": "resolver.csv", "second_rater": "second_rater.jsonl"},
        "ingest": {"per_term": 50, "language": "en"},
        "thresholds": {"med": 0.05, "und": 0.70},
        "cotrain": {
            "validation_fraction": 0.25,
            "defaults": {"k_pos": 8, "k_neg": 8, "tau": 0.7, "epsilon": 0.002, "patience": 6, "max_rounds": 15,
                         "logreg": {"l2_lambda": 0.01},
                         "forest": {"n_trees": 40, "max_depth": 6, "min_leaf": 1}},
        },
        "fairness": {"attribute": "Gender", "delta": 0.2, "top_k": 8, "cv_folds": 4, "train_fraction": 0.7,
                     "lambda_grid": [0.0, 0.005, 0.01, 0.02, 0.038, 0.05, 0.1, 0.2, 0.5]},
    }
    (out / "pipeline.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
