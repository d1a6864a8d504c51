#!/usr/bin/env python3
"""Writes the synthetic behavior-inference corpus (data/behavior_corpus.json).

Worlds are random arrangements of the scene vocabulary; every example names
one target object and the phrases that express the grounded behavior.
Deterministic for a given seed.
"""
import argparse
import json
import random

PARTS = {"door": "door_handle", "drawer": "drawer_handle", "box": "box_top"}
DISTRACTORS = ["pitcher", "cracker_box", "ball", "suitcase", "window"]
SIZES = {
    "door": (0.06, 0.9, 2.0),
    "drawer": (0.5, 0.6, 0.3),
    "box": (0.4, 0.4, 0.4),
    "door_handle": (0.05, 0.12, 0.04),
    "drawer_handle": (0.04, 0.15, 0.03),
    "box_top": (0.4, 0.4, 0.02),
}


def box(center, size):
    return {
        "min": [round(c - s / 2, 3) for c, s in zip(center, size)],
        "max": [round(c + s / 2, 3) for c, s in zip(center, size)],
    }


def make_world(rng, required, with_part, forbid=()):
    """Returns (objects, ids by label). `required` label is always present."""
    labels = {required}
    for extra in ["door", "drawer", "box"]:
        if extra != required and rng.random() < 0.5:
            labels.add(extra)
    specs = []
    for label in sorted(labels):
        specs.append(label)
        part = PARTS[label]
        if part in forbid:
            continue
        if (label == required and with_part) or (label != required and rng.random() < 0.4):
            specs.append(part)
    for d in DISTRACTORS:
        if rng.random() < 0.35:
            specs.append(d)
    rng.shuffle(specs)

    objects, ids, anchors = [], {}, {}
    # parents get positions first so parts can sit on them
    order = sorted(range(len(specs)), key=lambda i: specs[i] in PARTS.values())
    placed = {}
    for i in order:
        label = specs[i]
        if label in PARTS.values():
            parent = next(p for p, c in PARTS.items() if c == label)
            px, py, pz = anchors[parent]
            center = (round(px - 0.06, 3), round(py + 0.3, 3), round(pz + 0.1, 3))
        else:
            center = (round(rng.uniform(1.0, 6.0), 3), round(rng.uniform(-3.0, 3.0), 3), 0.5)
            anchors[label] = center
        placed[i] = center
    for obj_id, i in enumerate(range(len(specs))):
        label = specs[i]
        size = SIZES.get(label, (0.3, 0.3, 0.3))
        obj = {
            "id": obj_id,
            "label": label,
            "pose": {"x": placed[i][0], "y": placed[i][1], "z": placed[i][2], "yaw": 0.0},
            "bbox": box(placed[i], size),
            "parent": None,
        }
        ids[label] = obj_id
        objects.append(obj)
    for obj in objects:
        if obj["label"] in PARTS.values():
            parent = next(p for p, c in PARTS.items() if c == obj["label"])
            obj["parent"] = ids[parent]
    return {"objects": objects}, ids


def example(tree, world, gold):
    return {
        "tree": tree,
        "world": world,
        "gold": [{"phrase": p, "symbols": s} for p, s in sorted(gold.items())],
    }


def drive(rng, noun):
    world, ids = make_world(rng, noun, rng.random() < 0.5)
    sym = f"navigate({noun}#{ids[noun]})"
    tree = f"(VP (VB drive) (PP (TO to) (NP (DT the) (NN {noun}))))"
    return example(tree, world, {0: [sym], 1: [sym], 2: [sym]})


def open_(rng, noun):
    world, ids = make_world(rng, noun, rng.random() < 0.6)
    sym = f"open({noun}#{ids[noun]})"
    tree = f"(VP (VB open) (NP (DT the) (NN {noun})))"
    return example(tree, world, {0: [sym], 1: [sym]})


def look(rng):
    world, ids = make_world(rng, "door", rng.random() < 0.5)
    sym = f"look(door#{ids['door']})"
    tree = "(VP (VB look) (PP (IN through) (NP (DT the) (NN door))))"
    return example(tree, world, {0: [sym], 1: [sym], 2: [sym]})


def turn(rng):
    world, ids = make_world(rng, "door", True, forbid=("drawer_handle",))
    sym = f"turn(door_handle#{ids['door_handle']})"
    tree = "(VP (VB turn) (NP (NP (DT the) (NN handle)) (PP (IN of) (NP (DT the) (NN door)))))"
    return example(tree, world, {0: [sym], 1: [sym], 2: [sym], 3: [], 4: []})


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("--count", type=int, default=115)
    ap.add_argument("--out", default="data/behavior_corpus.json")
    args = ap.parse_args()
    rng = random.Random(args.seed)

    makers = []
    for noun in ["door", "drawer", "box"]:
        makers.append(lambda r, n=noun: drive(r, n))
        makers.append(lambda r, n=noun: open_(r, n))
    makers.append(look)
    makers.append(turn)

    examples = [makers[i % len(makers)](rng) for i in range(args.count)]
    with open(args.out, "w") as f:
        json.dump({"kind": "behavior", "examples": examples}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
