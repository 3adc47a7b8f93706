#!/usr/bin/env python3
"""Rebuilds the golden prompt fixtures under tests/fixtures/.

Deliberately assembles the prompt text with plain string concatenation,
independent of the C++ renderer, so the byte-level template tests compare
two separate implementations of the documented layout.
"""

import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "data" / "fixtures"
OUT = ROOT / "tests" / "fixtures"

PREAMBLE = (
    "Below is an instruction that describes a task, paired with an ### Input "
    "that provides further context. Write a ### Response that appropriately "
    "completes the request."
)
INSTRUCTION = (
    "Solve the given math problem step by step, and put your final answer "
    "after 'Final answer:'."
)
EOT = "<eot_id>"

EXEMPLAR_IDS = ["thomas", "toothpaste", "gene", "coffee"]
TARGET_LINE = 6  # 1-based line of the target problem in corpus.jsonl


def load_exemplars():
    by_id = {}
    with open(FIXTURES / "exemplars.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                by_id[rec["id"]] = rec
    return [by_id[i] for i in EXEMPLAR_IDS]


def load_target_question():
    with open(FIXTURES / "corpus.jsonl", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == TARGET_LINE:
                return json.loads(line)["question"]
    raise SystemExit("target line missing from corpus.jsonl")


def assemble(exemplars, target_question, lead_with_subquestion):
    text = PREAMBLE + "\n\n### Instruction:\n" + INSTRUCTION
    for ex in exemplars:
        response = ex["response"]
        if lead_with_subquestion:
            response = ex["subquestion"] + " " + response
        text += "\n\n### Input:\n" + ex["question"]
        text += "\n\n### Response:\n" + response + " " + EOT
    text += "\n\n### Input:\n" + target_question + "\n\n### Response:\n"
    return text


def main():
    exemplars = load_exemplars()
    target = load_target_question()
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "golden_cot.txt").write_text(
        assemble(exemplars, target, lead_with_subquestion=False), encoding="utf-8"
    )
    (OUT / "golden_questcot.txt").write_text(
        assemble(exemplars, target, lead_with_subquestion=True), encoding="utf-8"
    )
    print("wrote", OUT / "golden_cot.txt")
    print("wrote", OUT / "golden_questcot.txt")


if __name__ == "__main__":
    main()
