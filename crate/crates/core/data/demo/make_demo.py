"""Regenerates the demo corpus files in this directory.

Sentences mark mentions as [[entity_id|surface form]]. Embeddings are hashed
bag-of-words vectors, so dense scorers have something deterministic to rank
with; they carry no learned semantics.
"""

import hashlib
import json
import math
import re
from pathlib import Path

HERE = Path(__file__).resolve().parent
DIM = 16

ENTITIES = {
    "glass_orchard": "The Glass Orchard",
    "marrow_lane": "Marrow Lane",
    "dream_pop": "Dream pop",
    "lena_voss": "Lena Voss",
    "harlow": "Harlow",
    "tidewater": "Tidewater Records",
    "silver_fen": "Silver Fen",
    "shoegaze": "Shoegaze",
    "ostrava_hall": "Ostrava Hall",
    "mira_castell": "Mira Castell",
    "northgate": "Northgate Festival",
    "quiet_engines": "The Quiet Engines",
    "copper_sky": "Copper Sky",
    "post_rock": "Post-rock",
    "brennan_ash": "Brennan Ash",
    "kessel": "Kessel",
    "lowfield": "Lowfield Studio",
    "ivy_marsh": "Ivy Marsh",
    "halcyon_days": "Halcyon Days",
    "beacon_prize": "Beacon Prize",
    "river_arden": "River Arden",
    "saltmarsh_choir": "Saltmarsh Choir",
    "north_sea_radio": "North Sea Radio",
    "paper_lanterns": "Paper Lanterns",
}

DOCS = [
    ("D01", "The Glass Orchard", [
        ["[[glass_orchard|The Glass Orchard]] is a band formed in [[harlow|Harlow]] in 1991 .",
         "The group is fronted by singer [[lena_voss|Lena Voss]] ."],
        ["Their second album [[marrow_lane|Marrow Lane]] was released by [[tidewater|Tidewater Records]] .",
         "Critics placed the record firmly within [[dream_pop|dream pop]] ."],
        ["The band played [[northgate|Northgate Festival]] three years running .",
         "A reunion show followed at [[ostrava_hall|Ostrava Hall]] in 2015 ."],
    ]),
    ("D02", "Marrow Lane", [
        ["[[marrow_lane|Marrow Lane]] is the second studio album by [[glass_orchard|The Glass Orchard]] .",
         "It was recorded at [[lowfield|Lowfield Studio]] over six weeks ."],
        ["Producer [[mira_castell|Mira Castell]] layered guitars until the vocals blurred .",
         "The lead single was [[halcyon_days|Halcyon Days]] ."],
        ["Reviewers compared the sound to early [[shoegaze|shoegaze]] records .",
         "The album sold modestly on release ."],
    ]),
    ("D03", "Dream pop", [
        ["[[dream_pop|Dream pop]] is a style of alternative rock built on atmosphere .",
         "It is closely related to [[shoegaze|shoegaze]] ."],
        ["Many of its bands recorded for small labels such as [[tidewater|Tidewater Records]] .",
         "Vocals are often treated as another texture ."],
    ]),
    ("D04", "Lena Voss", [
        ["[[lena_voss|Lena Voss]] is a singer and songwriter born in [[kessel|Kessel]] .",
         "She moved to [[harlow|Harlow]] as a teenager ."],
        ["Voss co-wrote most of [[marrow_lane|Marrow Lane]] .",
         "She later sang with the [[saltmarsh_choir|Saltmarsh Choir]] ."],
        ["In 2009 she received the [[beacon_prize|Beacon Prize]] for songwriting ."],
    ]),
    ("D05", "Harlow", [
        ["[[harlow|Harlow]] is a port town on the [[river_arden|River Arden]] .",
         "Its music scene grew around a few rehearsal rooms ."],
        ["The town hosts [[northgate|Northgate Festival]] every summer .",
         "Local radio station [[north_sea_radio|North Sea Radio]] broadcasts from the harbour ."],
    ]),
    ("D06", "Tidewater Records", [
        ["[[tidewater|Tidewater Records]] is an independent label based in [[harlow|Harlow]] .",
         "It was founded by a record shop owner in 1988 ."],
        ["Its roster included [[glass_orchard|The Glass Orchard]] and [[quiet_engines|The Quiet Engines]] .",
         "The label favoured [[dream_pop|dream pop]] and [[post_rock|post-rock]] acts ."],
    ]),
    ("D07", "Silver Fen", [
        ["[[silver_fen|Silver Fen]] is the debut album of [[quiet_engines|The Quiet Engines]] .",
         "It consists of four long instrumental pieces ."],
        ["The album was mixed at [[lowfield|Lowfield Studio]] by [[brennan_ash|Brennan Ash]] .",
         "It is regarded as a landmark of [[post_rock|post-rock]] ."],
    ]),
    ("D08", "Shoegaze", [
        ["[[shoegaze|Shoegaze]] is a genre marked by loud washes of guitar .",
         "Its name comes from performers staring at their effects pedals ."],
        ["The style influenced [[dream_pop|dream pop]] and later [[post_rock|post-rock]] ."],
    ]),
    ("D09", "Ostrava Hall", [
        ["[[ostrava_hall|Ostrava Hall]] is a concert venue in [[kessel|Kessel]] .",
         "It seats about two thousand people ."],
        ["[[quiet_engines|The Quiet Engines]] recorded a live album there .",
         "The hall was renovated in 2012 ."],
    ]),
    ("D10", "Mira Castell", [
        ["[[mira_castell|Mira Castell]] is a record producer and engineer .",
         "She began her career as an assistant at [[lowfield|Lowfield Studio]] ."],
        ["Castell produced [[copper_sky|Copper Sky]] for [[ivy_marsh|Ivy Marsh]] .",
         "Her productions favour wide stereo reverbs ."],
    ]),
    ("D11", "Northgate Festival", [
        ["[[northgate|Northgate Festival]] is an annual music festival .",
         "It takes place on the banks of the [[river_arden|River Arden]] ."],
        ["Past headliners include [[quiet_engines|The Quiet Engines]] .",
         "The festival is sponsored by [[north_sea_radio|North Sea Radio]] ."],
    ]),
    ("D12", "The Quiet Engines", [
        ["[[quiet_engines|The Quiet Engines]] are an instrumental band from [[kessel|Kessel]] .",
         "The band was formed by guitarist [[brennan_ash|Brennan Ash]] ."],
        ["Their debut [[silver_fen|Silver Fen]] appeared on [[tidewater|Tidewater Records]] .",
         "They are usually filed under [[post_rock|post-rock]] ."],
        ["The band toured with [[glass_orchard|The Glass Orchard]] in 1999 ."],
    ]),
    ("D13", "Copper Sky", [
        ["[[copper_sky|Copper Sky]] is an album by [[ivy_marsh|Ivy Marsh]] .",
         "It was produced by [[mira_castell|Mira Castell]] ."],
        ["The record blends folk songs with [[dream_pop|dream pop]] textures .",
         "A choir part was sung by the [[saltmarsh_choir|Saltmarsh Choir]] ."],
    ]),
    ("D14", "Post-rock", [
        ["[[post_rock|Post-rock]] uses rock instruments for texture rather than riffs .",
         "Pieces are often long and mostly instrumental ."],
        ["The genre owes a debt to [[shoegaze|shoegaze]] ."],
    ]),
    ("D15", "Brennan Ash", [
        ["[[brennan_ash|Brennan Ash]] is a guitarist and mixing engineer .",
         "He founded [[quiet_engines|The Quiet Engines]] in [[kessel|Kessel]] ."],
        ["Ash owns a share of [[lowfield|Lowfield Studio]] .",
         "He won the [[beacon_prize|Beacon Prize]] in 2011 ."],
    ]),
    ("D16", "Kessel", [
        ["[[kessel|Kessel]] is an inland city with a large student population .",
         "Its best known venue is [[ostrava_hall|Ostrava Hall]] ."],
        ["Several bands, including [[quiet_engines|The Quiet Engines]] , started there ."],
    ]),
    ("D17", "Lowfield Studio", [
        ["[[lowfield|Lowfield Studio]] is a recording studio outside [[harlow|Harlow]] .",
         "It is housed in a converted grain store ."],
        ["Albums recorded there include [[marrow_lane|Marrow Lane]] and [[silver_fen|Silver Fen]] .",
         "The studio keeps a vintage tape machine ."],
    ]),
    ("D18", "Ivy Marsh", [
        ["[[ivy_marsh|Ivy Marsh]] is a folk singer from the [[river_arden|River Arden]] valley .",
         "Her album [[copper_sky|Copper Sky]] was her breakthrough ."],
        ["She often appears on [[north_sea_radio|North Sea Radio]] .",
         "Marsh has covered [[halcyon_days|Halcyon Days]] in concert ."],
    ]),
    ("D19", "Halcyon Days", [
        ["[[halcyon_days|Halcyon Days]] is a single by [[glass_orchard|The Glass Orchard]] .",
         "It was taken from the album [[marrow_lane|Marrow Lane]] ."],
        ["The song was played heavily on [[north_sea_radio|North Sea Radio]] .",
         "A slower version was later recorded by [[ivy_marsh|Ivy Marsh]] ."],
    ]),
    ("D20", "Beacon Prize", [
        ["The [[beacon_prize|Beacon Prize]] is an award for independent musicians .",
         "It is presented each winter at [[ostrava_hall|Ostrava Hall]] ."],
        ["Winners include [[lena_voss|Lena Voss]] and [[brennan_ash|Brennan Ash]] .",
         "The [[paper_lanterns|Paper Lanterns]] collective nominated the first winner ."],
    ]),
]

PAIRS = [
    ("glass_orchard", "dream_pop"),
    ("silver_fen", "post_rock"),
    ("lena_voss", "kessel"),
    ("marrow_lane", "lowfield"),
    ("copper_sky", "lowfield"),
    ("halcyon_days", "north_sea_radio"),
    ("quiet_engines", "ostrava_hall"),
    ("ivy_marsh", "dream_pop"),
    ("beacon_prize", "quiet_engines"),
    ("paper_lanterns", "river_arden"),
]

# Gold evidence for the first pairs: passage sequences head -> tail.
GOLD = {
    ("glass_orchard", "dream_pop"): [["D02-0", "D01-1"], ["D06-1"]],
    ("silver_fen", "post_rock"): [["D07-0", "D12-0", "D07-1"], ["D12-1"]],
    ("lena_voss", "kessel"): [["D04-0"]],
    ("copper_sky", "lowfield"): [["D13-0", "D10-0"]],
    ("halcyon_days", "north_sea_radio"): [["D18-1"]],
    ("ivy_marsh", "dream_pop"): [["D13-0", "D13-1"]],
}

MARK = re.compile(r"\[\[([a-z_]+)\|([^\]]+)\]\]")


def parse_sentence(text):
    tokens, mentions = [], []
    pos = 0
    for m in MARK.finditer(text):
        tokens.extend(text[pos:m.start()].split())
        surface = m.group(2).split()
        mentions.append((m.group(1), len(tokens), len(tokens) + len(surface)))
        tokens.extend(surface)
        pos = m.end()
    tokens.extend(text[pos:].split())
    return tokens, mentions


def build_docs():
    docs = []
    for doc_id, title, passages in DOCS:
        out = []
        for i, sentences in enumerate(passages):
            sents, ments = [], []
            for s_idx, s in enumerate(sentences):
                tokens, mentions = parse_sentence(s)
                sents.append(tokens)
                ments.extend({"entity": e, "sentence": s_idx, "start": a, "end": b} for e, a, b in mentions)
            out.append({"id": f"{doc_id}-{i}", "sentences": sents, "mentions": ments})
        docs.append({"id": doc_id, "title": title, "passages": out})
    return docs


def embed(text):
    vec = [0.0] * DIM
    for word in re.findall(r"[a-z0-9]+", text.lower()):
        h = hashlib.sha256(word.encode()).digest()
        vec[h[0] % DIM] += 1.0 if h[1] % 2 == 0 else -1.0
    norm = math.sqrt(sum(v * v for v in vec)) or 1.0
    return [round(v / norm, 6) for v in vec]


def dump_jsonl(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, separators=(",", ":")) + "\n")


def main():
    docs = build_docs()
    passage_text = {p["id"]: " ".join(t for s in p["sentences"] for t in s) for d in docs for p in d["passages"]}
    dump_jsonl(HERE / "corpus.jsonl", docs)
    dump_jsonl(HERE / "entities.jsonl", [{"id": k, "name": v} for k, v in sorted(ENTITIES.items())])
    dump_jsonl(HERE / "pairs.jsonl", [{"head": h, "tail": t} for h, t in PAIRS])
    gold = []
    for (h, t), paths in GOLD.items():
        passages = []
        for path in paths:
            passages.extend(p for p in path if p not in passages)
        gold.append({"head": h, "tail": t, "evidence_passages": passages, "evidence_paths": paths})
    dump_jsonl(HERE / "gold.jsonl", gold)

    queries = []
    for h, t in PAIRS:
        q = f"What is the relation between {ENTITIES[h]} and {ENTITIES[t]}?"
        queries.append(q)
        queries.extend(f"{q} {text}" for text in passage_text.values())
    with open(HERE / "embeddings.jsonl", "w") as f:
        f.write(f"dim={DIM}\n")
        for q in queries:
            f.write(json.dumps({"key": q, "kind": "query", "vec": embed(q)}, separators=(",", ":")) + "\n")
        for pid, text in passage_text.items():
            f.write(json.dumps({"key": pid, "kind": "passage", "vec": embed(text)}, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
