#!/usr/bin/env python3
# Copyright 2026 The beecurate Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Generates data/toy_samples.jsonl: 200 synthetic document-QA samples.

The file is committed; rerun only to regenerate it deliberately. A handful of
samples carry garbled or mismatched answers so the loss filter has realistic
upper-tail material to remove.
"""
import json
import random
import sys

SEED = 20250717
COUNT = 200

COMPANIES = ["Huayu Logistics", "Beiming Foods", "Qinghe Textiles", "Lanting Pharma",
             "Xinyuan Energy", "Tianfu Optics", "Haixi Shipping", "Jinlong Steel"]
CITIES = ["Shanghai", "Shenzhen", "Chengdu", "Hangzhou", "Wuhan", "Tianjin"]
CATEGORIES = ["printed_text", "table", "seal", "chart"]
MONTHS = ["January", "February", "March", "April", "May", "June", "July",
          "August", "September", "October", "November", "December"]


def money(rng):
    return f"{rng.randint(10, 9999)},{rng.randint(0, 999):03d}.{rng.randint(0, 99):02d}"


def make_sample(rng, idx):
    category = CATEGORIES[idx % len(CATEGORIES)]
    company = rng.choice(COMPANIES)
    city = rng.choice(CITIES)
    year = rng.randint(2018, 2024)
    month = rng.choice(MONTHS)
    if category == "printed_text":
        kind = rng.randrange(3)
        if kind == 0:
            q = "Which company issued this annual report?"
            a = f"The report was issued by {company}."
        elif kind == 1:
            q = "Where is the registered office located?"
            a = f"The registered office is in {city}."
        else:
            q = "What is the contract signing date?"
            a = f"The contract was signed in {month} {year}."
    elif category == "table":
        q = f"What was the total revenue in {year} according to the table?"
        a = f"The total revenue in {year} was {money(rng)} yuan."
    elif category == "seal":
        q = "What organization name appears on the seal?"
        a = f"The seal reads {company} Co., Ltd. {city} branch."
    else:
        q = f"Which quarter shows the highest value in the {year} sales chart?"
        a = f"Q{rng.randint(1, 4)} has the highest value at {rng.randint(5, 95)} percent."
    meta = {"category": category, "source": f"synthetic-{year}"}
    return {
        "id": f"doc-{idx:04d}",
        "question": q,
        "answer": a,
        "image_ref": f"images/doc-{idx:04d}.png",
        "metadata": meta,
    }


def garble(rng, text):
    alphabet = "QXZJVKWYqxzjvkwy#@%&*~^|"
    return "".join(rng.choice(alphabet) for _ in range(len(text)))


def main(out_path):
    rng = random.Random(SEED)
    samples = [make_sample(rng, i) for i in range(COUNT)]
    # Noisy tail: fully garbled answers and cross-lingual mismatches.
    for idx in rng.sample(range(COUNT), 6):
        samples[idx]["answer"] = garble(rng, samples[idx]["answer"])
        samples[idx]["metadata"]["note"] = "corrupted"
    for idx in rng.sample(range(COUNT), 3):
        if samples[idx]["metadata"].get("note"):
            continue
        samples[idx]["answer"] = "印章内容无法辨认，疑似扫描错误。"
        samples[idx]["metadata"]["note"] = "mismatched"
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        for s in samples:
            f.write(json.dumps(s, ensure_ascii=False, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/toy_samples.jsonl")
