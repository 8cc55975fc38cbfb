"""
Metrics Service — corpus BLEU and chrF++ on whitespace tokens.

BLEU:
- clipped n-gram matches for n = 1..4 summed over the corpus
- an order is skipped only when neither hypotheses nor references contain
  n-grams of that order; any remaining zero precision gives 0
- brevity penalty exp(1 − r/h) when h < r; an empty hypothesis side gives 0
- no smoothing

chrF++:
- per segment, character n-grams 1..6 (whitespace removed) and word
  n-grams 1..2; precision and recall averaged uniformly over the orders
  present on both sides, then F with β = 2
- the corpus score is the mean segment score
"""

import math
import re
from collections import Counter
from typing import List, Sequence, Tuple

from app.exceptions import MetricError

NGRAM_ORDER = 4
CHRF_CHAR_ORDER = 6
CHRF_WORD_ORDER = 2
CHRF_BETA = 2


def _check(hypotheses: Sequence[str], references: Sequence[str]) -> None:
    if len(hypotheses) != len(references):
        raise MetricError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise MetricError("cannot score an empty corpus")


def extract_ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def extract_char_ngrams(s: str, n: int) -> Counter:
    return Counter(s[i:i + n] for i in range(len(s) - n + 1))


def delete_whitespace(text: str) -> str:
    return re.sub(r"\s+", "", text)


# ------- BLEU -------

def bleu_statistics(hypotheses: Sequence[str], references: Sequence[str]) -> Tuple[List[int], List[int], List[int], int, int]:
    """(matches, hypothesis totals, reference totals, hyp length, ref length) per order."""
    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    ref_total = [0] * NGRAM_ORDER
    sys_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h_tokens, r_tokens = hyp.split(), ref.split()
        sys_len += len(h_tokens)
        ref_len += len(r_tokens)
        for n in range(1, NGRAM_ORDER + 1):
            h_ngrams = extract_ngrams(h_tokens, n)
            r_ngrams = extract_ngrams(r_tokens, n)
            correct[n - 1] += sum((h_ngrams & r_ngrams).values())
            total[n - 1] += sum(h_ngrams.values())
            ref_total[n - 1] += sum(r_ngrams.values())
    return correct, total, ref_total, sys_len, ref_len


def compute_bleu(correct, total, ref_total, sys_len: int, ref_len: int) -> float:
    if sys_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for n in range(NGRAM_ORDER):
        if total[n] == 0 and ref_total[n] == 0:
            continue
        if correct[n] == 0:
            return 0.0
        log_sum += math.log(correct[n] / total[n])
        orders += 1
    if orders == 0:
        return 0.0
    brevity_penalty = math.exp(1.0 - ref_len / sys_len) if sys_len < ref_len else 1.0
    return 100.0 * brevity_penalty * math.exp(log_sum / orders)


def bleu(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU in [0, 100]."""
    _check(hypotheses, references)
    return compute_bleu(*bleu_statistics(hypotheses, references))


# ------- chrF++ -------

def segment_statistics(hypothesis: str, reference: str) -> List[Tuple[int, int, int]]:
    """(hyp count, ref count, matches) for every character then word order."""
    stats = []
    h_chars, r_chars = delete_whitespace(hypothesis), delete_whitespace(reference)
    for n in range(1, CHRF_CHAR_ORDER + 1):
        h, r = extract_char_ngrams(h_chars, n), extract_char_ngrams(r_chars, n)
        stats.append((sum(h.values()), sum(r.values()), sum((h & r).values())))
    h_tokens, r_tokens = hypothesis.split(), reference.split()
    for n in range(1, CHRF_WORD_ORDER + 1):
        h, r = extract_ngrams(h_tokens, n), extract_ngrams(r_tokens, n)
        stats.append((sum(h.values()), sum(r.values()), sum((h & r).values())))
    return stats


def _avg_precision_and_recall(stats: List[Tuple[int, int, int]]) -> Tuple[float, float]:
    precision = recall = 0.0
    effective = 0
    for hyp_count, ref_count, common in stats:
        if hyp_count > 0 and ref_count > 0:
            precision += common / hyp_count
            recall += common / ref_count
            effective += 1
    if effective == 0:
        return 0.0, 0.0
    return precision / effective, recall / effective


def _f_beta(precision: float, recall: float, beta: float = CHRF_BETA) -> float:
    if precision + recall == 0:
        return 0.0
    b2 = beta ** 2
    return (1 + b2) * precision * recall / (b2 * precision + recall)


def sentence_chrfpp(hypothesis: str, reference: str) -> float:
    return 100.0 * _f_beta(*_avg_precision_and_recall(segment_statistics(hypothesis, reference)))


def chrfpp(hypotheses: Sequence[str], references: Sequence[str]) -> float:
    """Macro-averaged segment chrF++ in [0, 100]."""
    _check(hypotheses, references)
    scores = [sentence_chrfpp(h, r) for h, r in zip(hypotheses, references)]
    return sum(scores) / len(scores)
