#!/usr/bin/env python3
"""Regenerates data/mini: 40 synthetic memes and 20 synthetic videos.

Everything is drawn from a fixed seed, so rerunning the script rewrites the
same bytes. Requires Pillow.
"""

import json
import random
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path(__file__).resolve().parent.parent / "data" / "mini"
rng = random.Random(7)

LEXICON = ["vermin", "parasites", "subhuman", "go back where", "invaders", "filth"]

HATE_LEX = [
    "these people are vermin and should leave",
    "parasites like them ruin every city",
    "they are subhuman and everyone knows it",
    "go back where you came from",
    "the invaders are taking over our streets",
    "nothing but filth from that crowd",
    "vermin everywhere since they arrived",
]
HATE_PLAIN = [
    "you know exactly what they are like",
    "imagine letting that group vote",
    "they should never have been allowed in",
    "another day another problem from them",
]
BENIGN_LEX = [
    "calling refugees vermin is never acceptable",
    "my cat brought in some filth from the garden",
    "space invaders high score night",
]
BENIGN_PLAIN = [
    "when the coffee kicks in on monday",
    "me explaining memes to my grandmother",
    "that feeling when the build passes first try",
    "weekend plans versus weekend reality",
    "dogs waiting for the mail carrier",
    "when you finally find the missing sock",
    "group project energy",
    "my houseplants after one week of vacation",
]


def meme_image(path, seed):
    r = random.Random(seed)
    img = Image.new("RGB", (48, 48), tuple(r.randrange(40, 215) for _ in range(3)))
    d = ImageDraw.Draw(img)
    for _ in range(3):
        x0, y0 = r.randrange(0, 32), r.randrange(0, 32)
        d.rectangle([x0, y0, x0 + r.randrange(6, 16), y0 + r.randrange(6, 16)],
                    fill=tuple(r.randrange(0, 256) for _ in range(3)))
    img.save(path, optimize=False)


def video_frame(path, seed, index, count):
    r = random.Random(seed)
    base = [r.randrange(30, 200) for _ in range(3)]
    t = index / max(1, count - 1)
    img = Image.new("RGB", (40, 30), tuple(int(c + 50 * t) for c in base))
    d = ImageDraw.Draw(img)
    x = int(4 + 28 * t)
    d.ellipse([x, 10, x + 8, 18], fill=(250, 250, 250))
    img.save(path, optimize=False)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def memes():
    # (label, lexicon hit): 14 hateful+hit, 6 hateful, 4 benign+hit, 16 benign.
    plan = ([("hateful", True)] * 14 + [("hateful", False)] * 6 +
            [("non-hateful", True)] * 4 + [("non-hateful", False)] * 16)
    rng.shuffle(plan)
    (ROOT / "memes").mkdir(parents=True, exist_ok=True)
    records, answers = [], []
    for i, (label, hit) in enumerate(plan, start=1):
        mid = f"meme_{i:03d}"
        if label == "hateful":
            text = rng.choice(HATE_LEX if hit else HATE_PLAIN)
        else:
            text = rng.choice(BENIGN_LEX if hit else BENIGN_PLAIN)
        meme_image(ROOT / "memes" / f"{mid}.png", 1000 + i)
        records.append({"id": mid, "image": f"memes/{mid}.png", "text": text, "label": label})
        # Scripted annotators: they confirm hateful posts without slurs and
        # overrule keyword hits in benign posts, except every third one.
        if label == "hateful":
            human = "positive" if (hit or i % 3) else "negative"
        else:
            human = "positive" if (hit and i % 3 == 0) else "negative"
        answers.append({"item_id": mid, "label": human,
                        "elapsed_s": round(rng.uniform(12.0, 45.0), 1)})
    write_jsonl(ROOT / "memes.mft", records)
    write_jsonl(ROOT / "answers.jsonl", answers)


def videos():
    labels = ["hateful"] * 5 + ["offensive"] * 5 + ["normal"] * 10
    rng.shuffle(labels)
    counts = [8, 12, 16, 20, 31]
    records, descriptions = [], []
    for i, label in enumerate(labels, start=1):
        vid = f"vid_{i:02d}"
        frames = counts[i % len(counts)]
        fdir = ROOT / "videos" / vid
        fdir.mkdir(parents=True, exist_ok=True)
        for j in range(frames):
            video_frame(fdir / f"frame_{j:04d}.png", 2000 + i, j, frames)
        if label == "normal":
            title = rng.choice(["cooking stream", "bike repair", "city walk", "garden tour"])
            transcript = rng.choice(BENIGN_PLAIN)
            desc = "a person talks to the camera in a bright room"
        else:
            title = rng.choice(["rant", "street interview", "news reaction"])
            transcript = rng.choice(HATE_LEX + HATE_PLAIN)
            desc = "a speaker shouts at the camera while a crowd gathers"
        records.append({"id": vid, "frames_dir": f"videos/{vid}", "frame_count": frames,
                        "duration_s": float(30 + 6 * i), "title": title,
                        "transcript": transcript, "label": label})
        descriptions.append({"id": vid, "description": desc})
    write_jsonl(ROOT / "videos.mft", records)
    write_jsonl(ROOT / "descriptions.jsonl", descriptions)


def main():
    ROOT.mkdir(parents=True, exist_ok=True)
    with open(ROOT / "lexicon.txt", "w", encoding="utf-8") as f:
        f.write("# stub model trigger terms, matched on word boundaries\n")
        for term in LEXICON:
            f.write(term + "\n")
    memes()
    videos()
    (ROOT / "stub_fail_ids.txt").write_text("meme_005\nmeme_017\n")


if __name__ == "__main__":
    main()
