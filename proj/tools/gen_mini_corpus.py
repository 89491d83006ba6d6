#!/usr/bin/env python3
"""Generate the bundled synthetic mini-corpus under data/mini/.

Output is a pure function of the seed. Sentence boundaries are controlled so
that the C++ splitter reproduces the sentence indices used here, which lets
this script compute pair ids and planted ground truth independently.
"""

import argparse
import json
import random
from pathlib import Path

FNV128_OFFSET = 0x6C62272E07BB014262B821756295C58D
FNV128_PRIME = (1 << 88) + 0x13B
MASK128 = (1 << 128) - 1


def fnv1a128_hex(data: bytes) -> str:
    h = FNV128_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV128_PRIME) & MASK128
    return f"{h:032x}"


def pair_id(paper_doc, paper_sent, mention_doc, mention_sent):
    key = f"{paper_doc}\x1f{paper_sent}\x1f{mention_doc}\x1f{mention_sent}"
    return fnv1a128_hex(key.encode("utf-8"))


TOPICS = [
    # (field, exposure, outcome, population)
    ("medicine", "daily aspirin use", "colorectal cancer risk", "older adults"),
    ("medicine", "intermittent fasting", "blood pressure", "obese patients"),
    ("medicine", "vitamin d supplements", "respiratory infections", "schoolchildren"),
    ("biology", "soil microbial diversity", "plant drought tolerance", "wheat fields"),
    ("biology", "coral heat exposure", "symbiont loss", "reef colonies"),
    ("computer_science", "code review automation", "defect density", "open source projects"),
    ("computer_science", "pretrained language models", "translation errors", "low resource languages"),
    ("psychology", "mindfulness training", "exam anxiety", "university students"),
    ("psychology", "social media use", "sleep quality", "teenagers"),
    ("other", "urban tree cover", "summer heat deaths", "large cities"),
    ("other", "remote work policies", "commuting emissions", "service firms"),
    ("other", "minimum wage increases", "teen employment", "rural counties"),
]

VERBS_UP = ["increased", "raised", "improved", "boosted"]
VERBS_DOWN = ["reduced", "lowered", "decreased", "cut"]

BACKGROUND = [
    "{O} is a major concern for {P} worldwide.",
    "The mechanisms linking {E} and {O} remain poorly understood.",
    "Previous work on {O} has produced conflicting evidence.",
    "Rising rates of {O} place a growing burden on {P}.",
]
OBJECTIVE = [
    "In this study we aimed to determine whether {E} affects {O}.",
    "This study investigates the role of {E} in {O} among {P}.",
    "Our objective was to estimate the effect of {E} on {O}.",
    "We set out to test whether {E} changes {O} in {P}.",
]
METHODS = [
    "We recruited {N} participants from {K} sites and followed them for {M} months.",
    "Data were analyzed with mixed models adjusting for age and baseline status.",
    "We conducted a randomized trial across {K} regions over {M} months.",
    "Measurements were collected at baseline and at follow up visits.",
]
RESULTS = [
    "We found that {E} {V} {O} by {N} percent among {P}.",
    "{E_cap} was significantly associated with lower {O} in {P}.",
    "Compared with controls, {E} {V} {O} by {N} percent after {M} months.",
    "Groups exposed to {E} showed {N} percent less {O} than the comparison group.",
    "The observed effect of {E} on {O} was strongest among {P} with high exposure.",
]
CONCLUSIONS = [
    "These results suggest that {E} may protect {P} against {O}.",
    "We conclude that {E} is a promising target for reducing {O}.",
    "Our findings indicate that {E} should be considered when addressing {O} in {P}.",
]
NEWS_BACKGROUND = [
    "{O_cap} affects millions of people every year.",
    "Experts have long debated what drives {O}.",
]
NEWS_METHODS = [
    "The researchers recruited {N} volunteers and tracked them for {M} months.",
    "The team analyzed data collected at {K} sites.",
]
NEWS_LOOSE = [
    "The team found that {E} {V} {O} for {P}, according to the new study.",
    "Researchers found {E} was linked to lower {O} in {P}.",
    "The study suggests {E} could help reduce {O} in {P}.",
]
TWEET_FINDING = [
    "New study finds {E} {V} {O} by {N} percent among {P} #science",
    "Researchers found that {E} was significantly associated with lower {O} in {P}",
    "Big result: {E} may protect {P} against {O}, study suggests",
]
TWEET_OTHER = [
    "Interesting new paper on {E} and {O} out today, worth a read",
    "Reading about {O} this morning, what a topic",
]


def cap(s):
    return s[0].upper() + s[1:]


def fill(tpl, topic, rng, verb=None):
    _, e, o, p = topic
    return tpl.format(
        E=e, E_cap=cap(e), O=o, O_cap=cap(o), P=p,
        V=verb or rng.choice(VERBS_UP + VERBS_DOWN),
        N=rng.randint(11, 48), K=rng.randint(3, 19), M=rng.randint(6, 36),
    )


def close_paraphrase(sentence, rng):
    swaps = [("We found that", "Scientists found that"), ("We conclude that", "The authors conclude that"),
             ("Our findings indicate", "The findings indicate"), ("These results suggest", "The results suggest"),
             ("significantly", "strongly"), ("Compared with controls,", "Compared with a control group,")]
    out = sentence
    for a, b in swaps:
        if a in out:
            out = out.replace(a, b, 1)
            break
    else:
        out = "In short, " + out[0].lower() + out[1:]
    return out


def make_paper(idx, topic, rng, n_findings):
    doc_id = f"P{idx:02d}"
    sents, labels = [], []
    sents.append(fill(rng.choice(BACKGROUND), topic, rng)); labels.append("BACKGROUND")
    sents.append(fill(rng.choice(OBJECTIVE), topic, rng)); labels.append("OBJECTIVE")
    sents.append(fill(METHODS[0], topic, rng)); labels.append("METHODS")
    sents.append(fill(METHODS[1 + idx % 3], topic, rng)); labels.append("METHODS")
    n_res = n_findings - 1
    res_templates = rng.sample(RESULTS, n_res)
    for t in res_templates:
        sents.append(fill(t, topic, rng)); labels.append("RESULTS")
    sents.append(fill(rng.choice(CONCLUSIONS), topic, rng)); labels.append("CONCLUSIONS")
    return doc_id, sents, labels


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "mini"))
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--pairs", type=int, default=418)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # Findings per paper, news mentions per paper, tweets per paper.
    paper_findings = [5, 4, 5, 4, 4, 5, 4, 4, 5, 4, 4, 5]
    news_per_paper = [3, 3, 3, 3, 3, 3, 2, 2, 2, 2, 2, 2]
    tweets_per_paper = [4, 4, 4, 4, 3, 3, 3, 3, 3, 3, 3, 3]
    outlet_cycle = ["general_news", "press_release", "sci_tech"]

    # Findings per news story, adjusted until the pair total hits the target.
    owners = [i for i in range(len(TOPICS)) for _ in range(news_per_paper[i])]
    news_findings = [1 + (n % 3 == 2) + (n % 5 == 4) for n in range(len(owners))]
    tweet_findings = [0] * len(TOPICS)
    t = 0
    for i in range(len(TOPICS)):
        for _ in range(tweets_per_paper[i]):
            t += 1
            tweet_findings[i] += 0 if t % 9 == 5 else 1

    def total_pairs():
        per_paper = list(tweet_findings)
        for n, i in enumerate(owners):
            per_paper[i] += news_findings[n]
        return sum(f * m for f, m in zip(paper_findings, per_paper))

    n = 0
    while total_pairs() != args.pairs:
        k = n % len(owners)
        step = 1 if total_pairs() < args.pairs else -1
        if 1 <= news_findings[k] + step <= 3:
            news_findings[k] += step
            if (total_pairs() - args.pairs) * step > 0:
                news_findings[k] -= step
        n += 1
        if n > 10000:
            raise SystemExit("cannot reach the requested pair count")

    docs = []
    gold_findings = []  # (doc_id, sent_idx)
    paper_info = {}
    for i, topic in enumerate(TOPICS):
        doc_id, sents, labels = make_paper(i + 1, topic, rng, paper_findings[i])
        doi = f"10.5555/mini.{i + 1:03d}"
        docs.append({"doc_id": doc_id, "source_kind": "paper", "doi": doi, "field": topic[0],
                     "text": " ".join(sents), "published_at": f"2021-{(i % 12) + 1:02d}-15"})
        finds = [k for k, l in enumerate(labels) if l in ("RESULTS", "CONCLUSIONS")]
        gold_findings += [(doc_id, k) for k in finds]
        paper_info[doc_id] = {"doi": doi, "topic": topic, "sents": sents, "findings": finds}

    mentions = []  # (doc_id, paper_doc_id, [(sent_idx, source paper sent or None, fidelity)])
    news_count = 0
    for i in range(len(TOPICS)):
        pdoc = f"P{i + 1:02d}"
        info = paper_info[pdoc]
        topic = info["topic"]
        for k in range(news_per_paper[i]):
            news_count += 1
            doc_id = f"N{news_count:02d}"
            outlet = outlet_cycle[(news_count + i) % 3]
            # Press releases copy more closely, general news paraphrases loosely.
            n_find = news_findings[news_count - 1]
            src = rng.sample(info["findings"], min(n_find, len(info["findings"])))
            sents, planted = [], []
            sents.append(fill(rng.choice(NEWS_BACKGROUND), topic, rng))
            for s in src:
                r = rng.random()
                if outlet == "press_release":
                    fid = "verbatim" if r < 0.5 else "close"
                elif outlet == "sci_tech":
                    fid = "verbatim" if r < 0.25 else ("close" if r < 0.75 else "loose")
                else:
                    fid = "close" if r < 0.4 else "loose"
                base = info["sents"][s]
                if fid == "verbatim":
                    text = base
                elif fid == "close":
                    text = close_paraphrase(base, rng)
                else:
                    text = fill(rng.choice(NEWS_LOOSE), topic, rng)
                planted.append((len(sents), s, fid))
                sents.append(text)
            sents.append(fill(rng.choice(NEWS_METHODS), topic, rng))
            linked = info["doi"]
            if news_count % 7 == 0:
                linked = "https://doi.org/" + linked.upper()
            docs.append({"doc_id": doc_id, "source_kind": "news", "linked_doi": linked, "field": topic[0],
                         "outlet_type": outlet, "text": " ".join(sents),
                         "published_at": f"2021-{(i % 12) + 1:02d}-{10 + k:02d}"})
            mentions.append((doc_id, pdoc, planted))

    tweet_count = 0
    for i in range(len(TOPICS)):
        pdoc = f"P{i + 1:02d}"
        info = paper_info[pdoc]
        topic = info["topic"]
        for k in range(tweets_per_paper[i]):
            tweet_count += 1
            doc_id = f"T{tweet_count:02d}"
            is_org = tweet_count % 4 == 0
            is_verified = tweet_count % 3 == 0
            followers = int(rng.lognormvariate(6.5 + 2.0 * is_verified, 1.2))
            following = int(rng.lognormvariate(5.5, 1.0))
            age = round(rng.uniform(0.5, 12.0), 1)
            planted = []
            if tweet_count % 9 == 5:
                text = fill(rng.choice(TWEET_OTHER), topic, rng)
            else:
                s = rng.choice(info["findings"])
                base = info["sents"][s]
                r = rng.random()
                if is_org:
                    fid = "verbatim" if r < 0.6 else "close"
                elif is_verified:
                    fid = "close" if r < 0.2 else "loose"
                else:
                    fid = "verbatim" if r < 0.2 else ("close" if r < 0.6 else "loose")
                if fid == "verbatim":
                    text = base
                elif fid == "close":
                    text = close_paraphrase(base, rng)
                else:
                    text = fill(rng.choice(TWEET_FINDING), topic, rng)
                planted.append((0, s, fid))
            meta = {"is_verified": is_verified, "is_organization": is_org, "followers": followers,
                    "following": following, "account_age_years": age}
            docs.append({"doc_id": doc_id, "source_kind": "tweet", "linked_doi": info["doi"], "field": topic[0],
                         "text": text, "user_meta": meta,
                         "published_at": f"2021-{(i % 12) + 1:02d}-{1 + k:02d}"})
            mentions.append((doc_id, pdoc, planted))

    for m_doc, _, planted in mentions:
        gold_findings += [(m_doc, s) for s, _, _ in planted]

    # Pair ground truth and annotations.
    fidelity_ims = {"verbatim": [5], "close": [4, 5], "loose": [3, 4]}
    annotators = [f"A{k:02d}" for k in range(12)]
    competence = {a: c for a, c in zip(annotators, [0.95, 0.9, 0.9, 0.85, 0.85, 0.8, 0.8, 0.75, 0.7, 0.7, 0.6, 0.2])}
    ann_rng = random.Random(args.seed + 1)
    annotations = []
    n_pairs = 0
    for m_doc, pdoc, planted in mentions:
        p_finds = paper_info[pdoc]["findings"]
        for ps in p_finds:
            for ms, src, fid in planted:
                n_pairs += 1
                pid = pair_id(pdoc, ps, m_doc, ms)
                if fid == "verbatim" and src == ps:
                    continue  # auto-matched by construction
                truth = ann_rng.choice(fidelity_ims[fid]) if src == ps else ann_rng.choice([1, 1, 2])
                for a in sorted(ann_rng.sample(annotators, 3)):
                    rating = truth if ann_rng.random() < competence[a] else ann_rng.randint(1, 5)
                    annotations.append({"pair_id": pid, "annotator_id": a, "rating": rating})

    # Sentence-role training corpus from fresh fills of the same template families.
    tr_rng = random.Random(args.seed + 2)
    extra_topics = [("other", e, o, p) for e, o, p in [
        ("green tea intake", "liver enzyme levels", "middle aged women"),
        ("bilingual education", "reading scores", "primary pupils"),
        ("cloud caching", "page load latency", "mobile users"),
        ("forest fragmentation", "bird nesting success", "temperate woodlands"),
        ("shift work", "metabolic syndrome", "nurses"),
        ("peer tutoring", "math achievement", "rural schools"),
    ]]
    pool_topics = list(TOPICS) + extra_topics
    families = [("BACKGROUND", BACKGROUND + NEWS_BACKGROUND + TWEET_OTHER, 0.05),
                ("OBJECTIVE", OBJECTIVE, 0.2), ("METHODS", METHODS + NEWS_METHODS, 0.4),
                ("RESULTS", RESULTS + NEWS_LOOSE[:2] + TWEET_FINDING[:2], 0.65),
                ("CONCLUSIONS", CONCLUSIONS + NEWS_LOOSE[2:] + TWEET_FINDING[2:], 0.9)]
    training = []
    for rep in range(60):
        for label, tpls, pos in families:
            topic = tr_rng.choice(pool_topics)
            text = fill(tr_rng.choice(tpls), topic, tr_rng)
            if label in ("RESULTS", "CONCLUSIONS") and tr_rng.random() < 0.3:
                text = close_paraphrase(text, tr_rng)
            training.append({"text": text, "label": label,
                             "position": round(min(0.99, max(0.0, pos + tr_rng.uniform(-0.15, 0.15))), 3)})

    # Evidence retrieval toy set: claims restate paper findings.
    pool, claims = [], []
    for i, topic in enumerate(TOPICS):
        info = paper_info[f"P{i + 1:02d}"]
        for k, s in enumerate(info["findings"]):
            pool.append({"evidence_id": f"E{i + 1:02d}{k}", "text": info["sents"][s]})
        pool.append({"evidence_id": f"E{i + 1:02d}b", "text": info["sents"][0]})
        claims.append({"claim_id": f"C{i + 1:02d}",
                       "text": f"Claim: {topic[1]} changes {topic[2]} for {topic[3]}",
                       "gold_evidence_ids": [f"E{i + 1:02d}0"]})

    config = {
        "paths": {"documents": "documents.jsonl", "training": "sentences.jsonl",
                  "annotations": "annotations.jsonl", "output_dir": "out"},
        "sampling": {"per_bin": 6, "seed": 17, "pilot_per_bin": 3},
        "splits": {"seed": 5},
        "eval": {"split": "dev"},
        "annotation": {"mace": {"seed": 3}},
        "retrieval": {"datasets": [{"name": "mini", "claims": "claims.jsonl", "pool": "pool.jsonl"}],
                      "methods": [{"name": "bm25", "kind": "bm25"}, {"name": "tfidf_cosine", "kind": "cosine"},
                                  {"name": "lexical", "kind": "lexical"}]},
        "regressions": [
            {"name": "rq1", "min_group_size": 5},
            {"name": "rq2", "min_group_size": 5},
        ],
    }

    def dump(name, rows):
        with open(out / name, "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")

    dump("documents.jsonl", docs)
    dump("sentences.jsonl", training)
    dump("annotations.jsonl", annotations)
    dump("claims.jsonl", claims)
    dump("pool.jsonl", pool)
    dump("findings_gold.jsonl", [{"doc_id": d, "sent_idx": s} for d, s in sorted(gold_findings)])
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
        f.write("\n")
    summary = {"documents": len(docs), "papers": 12, "news": news_count, "tweets": tweet_count,
               "links": len(mentions), "pairs": n_pairs, "annotations": len(annotations),
               "training_sentences": len(training)}
    with open(out / "expected.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
