"""Scratch harness for calibrating the synthetic joint-vs-supervised gap."""

import sys
import time

import numpy as np

from facetgrader.llm import PipelineMockClient
from facetgrader.metrics import spearman
from facetgrader.pairs import GenerationConfig, build_contrastive_dataset
from facetgrader.synth import generate_corpus
from facetgrader.training import TrainConfig, predict_document, train


def run_experiment(seeds=(0, 1, 2, 3, 4), train_size=500, test_size=200, **config_overrides):
    t0 = time.perf_counter()
    gaps, joint_rhos, origin_rhos = [], [], []
    for seed in seeds:
        docs, _ = generate_corpus(train_size + test_size, seed=1000 + seed)
        train_docs, test_docs = docs[:train_size], docs[train_size:]
        pairs = build_contrastive_dataset(
            train_docs, PipelineMockClient(), GenerationConfig(model="mock", seed=seed)
        ).pairs
        gold = [d.grade for d in test_docs]

        cfg_joint = TrainConfig(seed=seed, **config_overrides)
        cfg_origin = TrainConfig(seed=seed, contrast_weight=0.0,
                                 **{k: v for k, v in config_overrides.items()
                                    if k != "contrast_weight"})
        params_joint, _ = train(train_docs, pairs, cfg_joint)
        params_origin, _ = train(train_docs, None, cfg_origin)

        rho_joint = spearman(gold, [predict_document(d, params_joint)[0] for d in test_docs])
        rho_origin = spearman(gold, [predict_document(d, params_origin)[0] for d in test_docs])
        joint_rhos.append(rho_joint)
        origin_rhos.append(rho_origin)
        gaps.append(rho_joint - rho_origin)
        print(f"  seed {seed}: joint {rho_joint:+.4f}  origin {rho_origin:+.4f}  gap {rho_joint-rho_origin:+.4f}", flush=True)
    elapsed = time.perf_counter() - t0
    print(f"  mean joint {np.mean(joint_rhos):+.4f}  mean origin {np.mean(origin_rhos):+.4f}  "
          f"MEAN GAP {np.mean(gaps):+.4f}  ({elapsed:.1f}s)", flush=True)
    return np.mean(gaps), elapsed


if __name__ == "__main__":
    overrides = {}
    for arg in sys.argv[1:]:
        key, _, value = arg.partition("=")
        overrides[key] = float(value) if "." in value else int(value)
    print(f"config overrides: {overrides}")
    run_experiment(**overrides)
