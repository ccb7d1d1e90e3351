#!/usr/bin/env python3
"""Smoke test for the sentpw_py extension module.

Build the module first, then run this script from the repository root:

    cargo build -p sentpw-python --release
    python3 python/smoke_test.py

The script locates the compiled cdylib under target/, stages it as an
importable module, and exercises the Python surface end to end.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def stage_module() -> Path:
    """Copy the built cdylib into a temp dir under its importable name."""
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libsentpw_py.so", "sentpw_py.so", "libsentpw_py.dylib")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the module first: cargo build -p sentpw-python --release")
    stage = Path(tempfile.mkdtemp(prefix="sentpw_py_"))
    shutil.copy2(built, stage / "sentpw_py.so")
    return stage


sys.path.insert(0, str(stage_module()))

import sentpw_py as sp  # noqa: E402

CHECKS = []


def check(name, condition):
    CHECKS.append(name)
    if not condition:
        sys.exit(f"FAIL {name}")
    print(f"ok {name}")


# Tokenization.
check("tokenize whitespace", sp.tokenize("how do i") == ["how", "do", "i"])
check("tokenize per_char", sp.tokenize("奶茶店", mode="per_char") == ["奶", "茶", "店"])
check(
    "tokenize keeps <PAD> intact",
    sp.tokenize("a <PAD> b", mode="per_char") == ["a", "<PAD>", "b"],
)

# Geocoding.
check("geo corner is zero", sp.encode_geo(-90.0, -180.0) == "0")
check("geo code fits 19 digits", len(sp.encode_geo(30.589044, 114.429768)) <= 19)
text, tokens = sp.poi_sentence("100", "致青春奶茶店", "食代铭美食城c09", 30.589044, 114.429768)
check("poi sentence layout", text.count("<PAD>") == 2 and tokens.count("<PAD>") == 2)
check("poi category stays out of the text", "100" not in text.split("<PAD>")[0])

# Loss values against hand-computed scalars.
sim = [[1.0, 0.9, 0.4], [0.9, 1.0, 0.3], [0.4, 0.3, 1.0]]
labels = [0, 0, 1]
loss, d_sim, weights = sp.multisim_loss(sim, labels)
anchor0 = 0.5 * math.log(1 + math.exp(-2 * 0.4)) + (1 / 50) * math.log(1 + math.exp(50 * -0.1))
check("multisim anchor term ~ 0.1857", abs(anchor0 - 0.18568) < 1e-4)
check("multisim d_sim sign convention", d_sim[0][1] < 0 < d_sim[0][2])

w = sp.ms_pair_weights([[1.0, 0.4], [0.4, 1.0]], [0, 1])
check("locality weight closed form", abs(w[0][1] - 1 / (math.exp(5) + 1)) < 1e-12)

identity = sp.ms_pair_weights(sim, labels)
check(
    "weights equal m * |d_sim|",
    all(
        abs(identity[i][j] - 3 * abs(d_sim[i][j])) < 1e-10
        for i in range(3)
        for j in range(3)
    ),
)

c_loss, c_grad = sp.contrastive_loss([[1.0, 0.7], [0.7, 1.0]], [0, 1], margin=0.5)
check("contrastive hinge value", abs(c_loss - 0.2) < 1e-12)

keep_neg, keep_pos, kept = sp.informative_pairs(sim, labels, epsilon=0.1)
check("filter reports a kept fraction", 0.0 <= kept <= 1.0)

# Evaluation protocols.
threshold, dev_acc = sp.threshold_search([0.9, 0.7, 0.6, 0.2], [1, 1, 0, 0], 0.05)
check("threshold separates clean scores", dev_acc == 1.0 and threshold < 0.7)
acc, f1 = sp.pair_classification([0.9, 0.8, 0.7, 0.1, 0.2], [1, 1, 0, 1, 0], 0.5)
check("pair classification f1", abs(f1 - 2 / 3) < 1e-12)

embs = [[0.0, 0.0], [2.0, 0.0], [0.0, 4.0], [2.0, 4.0]]
check("inter/intra hand geometry", abs(sp.inter_intra(embs, [0, 0, 1, 1]) - 4.0) < 1e-12)
coords = sp.pca2d([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
check("pca collapses a line", all(abs(xy[1]) < 1e-9 for xy in coords))

rate, evaluated, flagged = sp.hit_at_n(
    [[1.0, 0.0]], [7], [[1.0, 0.0], [0.0, 1.0]], [7, 8], n=1
)
check("hit@1 with duplicate embedding", rate == 1.0 and evaluated == 1)

# Training round trip on a tiny synthetic corpus.
rows = []
for class_id, stem in enumerate(["red apple %s", "blue car %s", "green tree %s"]):
    for suffix in ["one", "two", "three", "four"]:
        rows.append(f"{stem % suffix}\t{class_id}")
corpus = "\n".join(rows)
model = sp.train(corpus, from_text=True, epochs=3, steps=4, p=2, k=2, d_in=8, d_out=8, seed=3)
check("model reports its loss", model.loss == "multisim")
check("vocab covers the corpus", model.vocab_size > 10)

vectors = model.embed(["red apple one", "red apple two", "blue car one"])
check("embeddings have the configured width", len(vectors[0]) == 8)
norm = math.sqrt(sum(v * v for v in vectors[0]))
check("embeddings are unit norm", abs(norm - 1.0) < 1e-9)
same = model.score_pair("red apple one", "red apple two")
cross = model.score_pair("red apple one", "blue car one")
check("same-class pairs score higher", same > cross)

triplets = [
    ("red apple one", "red apple two", "blue car one"),
    ("blue car two", "blue car three", "green tree one"),
]
accuracy = model.triplet_accuracy(triplets)
check("triplet accuracy in range", 0.0 <= accuracy <= 1.0)

with tempfile.TemporaryDirectory() as tmp:
    path = str(Path(tmp) / "model.ck")
    model.save(path)
    reloaded = sp.Model.load(path)
    check(
        "checkpoint round trip preserves embeddings",
        reloaded.embed(["red apple one"]) == model.embed(["red apple one"]),
    )

print(f"\nsmoke test passed ({len(CHECKS)} checks)")
