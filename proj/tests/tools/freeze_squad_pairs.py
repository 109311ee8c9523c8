"""Freezes EM/F1 for the hand-labeled answer pairs with the SQuAD v1.1
reference scoring functions (normalize_answer / exact_match_score /
f1_score as distributed with the official evaluation script).

Degenerate pairs where both sides normalize to empty are scored 1/1.

Usage: python3 freeze_squad_pairs.py > ../data/squad_pairs.json
"""
import json
import re
import string
import sys
from collections import Counter


def normalize_answer(s):
    def remove_articles(text):
        return re.sub(r'\b(a|an|the)\b', ' ', text)

    def white_space_fix(text):
        return ' '.join(text.split())

    def remove_punc(text):
        exclude = set(string.punctuation)
        return ''.join(ch for ch in text if ch not in exclude)

    def lower(text):
        return text.lower()

    return white_space_fix(remove_articles(remove_punc(lower(s))))


def f1_score(prediction, ground_truth):
    prediction_tokens = normalize_answer(prediction).split()
    ground_truth_tokens = normalize_answer(ground_truth).split()
    if not prediction_tokens and not ground_truth_tokens:
        return 1.0
    common = Counter(prediction_tokens) & Counter(ground_truth_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0
    precision = 1.0 * num_same / len(prediction_tokens)
    recall = 1.0 * num_same / len(ground_truth_tokens)
    return (2 * precision * recall) / (precision + recall)


def exact_match_score(prediction, ground_truth):
    return normalize_answer(prediction) == normalize_answer(ground_truth)


PAIRS = [
    ("Pac-12 Conference", "Pac-12 Conference"),
    ("the Pac-12 Conference", "Pac-12 Conference"),
    ("Big 12 Conference", "Pac-12 Conference"),
    ("pac12 conference", "pac12"),
    ("Paris", "paris"),
    ("Paris, France", "Paris"),
    ("", "Paris"),
    ("Paris", ""),
    ("", ""),
    ("  A  an  the  ", ""),
    ("The Beatles", "Beatles"),
    ("a cat", "the cat"),
    ("An apple a day", "apple day"),
    ("Theatre", "the atre"),
    ("anthem", "an them"),
    ("Serie A", "Serie A"),
    ("La Liga", "Serie A"),
    ("Assassin's Creed: Unity", "Assassin's Creed Syndicate"),
    ("Assassin's Creed Syndicate", "Assassin's Creed: Syndicate"),
    ("Stone Town, Zanzibar", "Stone Town"),
    ("Freddie Mercury", "Freddie  Mercury"),
    ("Big Ten Conference", "Big 12 Conference"),
    ("1979", "April 18, 1979"),
    ("April 18, 1979", "18 April 1979"),
    ("New York New York", "New York"),
    ("the the the", "the"),
    ("yes", "Yes."),
    ("no", "yes"),
    ("U.S.A.", "USA"),
    ("U.S.", "United States"),
    ("Dijon, France", "Dijon"),
    ("Gustave Eiffel", "Alexandre Gustave Eiffel"),
    ("Colorado Buffaloes", "Colorado"),
    ("Buffalo Bills", "the Buffalo Bills"),
    ("Frontier Conference", "Pac-12 Conference"),
    ("Lycoming College", "Lycoming"),
    ("$1,000", "1000"),
    ("50%", "50"),
    ("rock-and-roll", "rock and roll"),
    ("Mother's Day", "mothers day"),
    ("an American football coach", "American football coach"),
    ("Europe", "Europe (continent)"),
    ("Edmund Hillary and Tenzing Norgay", "Tenzing Norgay and Edmund Hillary"),
    ("Los Angeles Lakers", "Lakers"),
    ("A Tale of Two Cities", "Tale of Two Cities"),
    ("the 2015 Wisconsin Badgers", "2015 Wisconsin Badgers football team"),
    ("x x y", "x y y"),
    ("one two three four", "four three two one"),
    ("HTTP/2", "http 2"),
    ("Mount Everest!", "mount everest"),
]


def main():
    assert len(PAIRS) == 50
    rows = []
    for pred, gold in PAIRS:
        rows.append({
            "prediction": pred,
            "gold": gold,
            "em": int(exact_match_score(pred, gold)),
            "f1": f1_score(pred, gold),
        })
    json.dump(rows, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
