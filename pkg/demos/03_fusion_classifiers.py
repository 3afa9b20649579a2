"""Outcome classification from uniformly sampled clips with four fusion topologies.

Run: python demos/03_fusion_classifiers.py
"""

import numpy as np

from hfd.classifiers import build_classifier, count_parameters, fusion_branches, predict_outcomes, train_classifier
from hfd.features import pairwise_flow, sample_uniform_clip
from hfd.synthetic import generate_trial, suite_scripts

STREAMS = ("rgb", "flow", "ft", "gripper")

for variant in "ABCD":
    print(variant, fusion_branches(variant, STREAMS))

# with one modality the topologies coincide
print("single-modality parameter counts:",
      {m: {count_parameters(build_classifier(v, [m])) for v in "ABCD"} for m in STREAMS})


def clips(scripts):
    flow = lambda a, b: pairwise_flow(a, b, "farneback")
    return [sample_uniform_clip(generate_trial(s)[0], n=16, flow_fn=flow) for s in scripts]


train, test = clips(suite_scripts(3, seed=0)), clips(suite_scripts(1, seed=1))
labels = np.array([int(c.label) for c in test])
for variant in ("A", "D"):
    # a small encoder trained from scratch; the full protocol starts from a pretrained backbone
    model = build_classifier(variant, STREAMS, clip_len=16, video_width=8, seed=0)
    train_classifier(model, train, epochs=60)
    acc = 100 * np.mean(predict_outcomes(model, test) == labels)
    print(f"I3D-{variant}: test outcome accuracy {acc:.1f}%")
