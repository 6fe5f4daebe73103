#!/usr/bin/env python3
"""Regenerates src/melt/data/toy_corpus.jsonl.

The corpus is a small synthetic materials-science text with three
co-occurrence families (battery cathodes, photocatalysts, dielectrics /
electronics) so that embedding training on it produces family structure
the graph stage can pick up.  Output is deterministic; rerunning this
script must reproduce the committed file byte for byte.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "melt" / "data" / "toy_corpus.jsonl"

FAMILIES = {
    "battery": {
        "materials": ["LiCoO2", "LiFePO4", "LiMn2O4"],
        "properties": ["capacity", "conductivity"],
        "applications": ["cathode", "battery"],
        "descriptors": ["layered", "spinel"],
        "methods": ["sintering", "XRD"],
    },
    "photo": {
        "materials": ["TiO2", "ZnO", "SrTiO3"],
        "properties": ["absorption", "conductivity"],
        "applications": ["photocatalyst", "degradation"],
        "descriptors": ["anatase", "rutile"],
        "methods": ["hydrothermal", "Raman"],
    },
    "dielectric": {
        "materials": ["BaTiO3", "PbTiO3", "MoS2"],
        "properties": ["permittivity", "polarization"],
        "applications": ["capacitor", "transistor"],
        "descriptors": ["tetragonal", "monolayer"],
        "methods": ["sintering", "Raman"],
    },
}

TEMPLATES = [
    "The {app} material {mat} shows a high {prop} after {method} treatment.",
    "{mat} adopts a {desc} structure and is widely used in {app} devices.",
    "We measured the {prop} of {desc} {mat} by {method} analysis.",
    "Compared with {mat2}, {mat} exhibits better {prop} in {app} tests.",
    "The {desc} phase of {mat} was confirmed by {method} patterns.",
    "Doping {mat} with {mat2} improves the {prop} of the {app}.",
    "{mat} is a promising {app} candidate because of its stable {prop}.",
    "Annealing changes the {desc} ordering in {mat} and its {prop}.",
]

EXTRAS = [
    "The band gap of TiO2 narrows under visible light illumination.",
    "The band gap of ZnO depends on the wurtzite lattice constants.",
    "A wide band gap makes SrTiO3 useful for oxide electronics.",
    "The melting point of LiCoO2 limits the sintering window.",
    "A high melting point is typical for perovskite oxides.",
    "The melting point of BaTiO3 was measured by thermal analysis.",
    "Hydrated CuSO4·5H2O loses water below the melting point.",
    "Crystals of CuSO4·5H2O and Ba(OH)2 were ground together.",
    "Adding Ba(OH)2 raises the pH during hydrothermal growth.",
    "The perovskite family includes BaTiO3, SrTiO3 and PbTiO3.",
    "Layered LiCoO2 and spinel LiMn2O4 are classic cathode oxides.",
    "Anatase and rutile are the common TiO2 polymorphs.",
    "The specific capacity of LiFePO4 fades slowly during cycling.",
    "Raman spectra distinguish monolayer MoS2 from bulk MoS2.",
    "XRD patterns index the tetragonal distortion of BaTiO3.",
    "Photocatalyst films of TiO2 drive dye degradation under ultraviolet light.",
]


def sentences_for_doc(rng: random.Random, n: int) -> list[str]:
    out = []
    for _ in range(n):
        family = FAMILIES[rng.choice(sorted(FAMILIES))]
        mat, mat2 = rng.sample(family["materials"], 2)
        text = rng.choice(TEMPLATES).format(
            mat=mat,
            mat2=mat2,
            prop=rng.choice(family["properties"]),
            app=rng.choice(family["applications"]),
            desc=rng.choice(family["descriptors"]),
            method=rng.choice(family["methods"]),
        )
        out.append(text)
    return out


def main() -> None:
    rng = random.Random(20240817)
    docs = []
    extras = list(EXTRAS)
    for d in range(12):
        body = sentences_for_doc(rng, 14)
        # spread the fixed sentences over the first docs
        while extras and len(body) < 17:
            body.append(extras.pop(0))
        rng.shuffle(body)
        docs.append({"doc_id": f"toy-{d:02d}", "text": " ".join(body)})
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8", newline="\n") as f:
        for doc in docs:
            f.write(json.dumps(doc, ensure_ascii=False) + "\n")
    total = sum(len(d["text"].split()) for d in docs)
    print(f"wrote {len(docs)} docs, ~{total} whitespace tokens -> {OUT}")


if __name__ == "__main__":
    main()
