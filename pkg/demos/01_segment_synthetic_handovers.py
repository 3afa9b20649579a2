"""Train a multi-task MS-TCN on synthetic handovers and inspect one prediction.

Run: python demos/01_segment_synthetic_handovers.py
"""

import numpy as np

from hfd.labels import HumanAction
from hfd.metrics import dataset_f1, dataset_frame_accuracy
from hfd.segmentation import MstcnConfig, build_segmenter, predict, train_segmenter
from hfd.synthetic import generate_trial, suite_scripts

# 3 trials per (task, outcome) cell for training, a fresh seed for testing
train = [generate_trial(s)[1] for s in suite_scripts(3, seed=0)]
test = [generate_trial(s)[1] for s in suite_scripts(1, seed=1)]
print(f"{len(train)} training trials, {len(test)} test trials")

# variant B keeps the original timeline and also segments the robot's actions
model = build_segmenter(MstcnConfig(variant="B", heads=("cls", "seg_h", "seg_r"), epochs=20, seed=0))
history = train_segmenter(model, train)
print("training loss:", " ".join(f"{x:.2f}" for x in history.train_loss[::4]))

preds = [predict(model, s) for s in test]
human = [p.human_track for p in preds], [s.human_actions for s in test]
print(f"frame-wise accuracy {dataset_frame_accuracy(*human):.1f}%")
print("segmental F1:", {k: round(v, 1) for k, v in dataset_f1(*human).items()})
print(f"outcome accuracy {100 * np.mean([p.outcome == s.outcome for p, s in zip(preds, test)]):.1f}%")

# compare one trial's predicted phases against the annotation, one letter per 3 frames
seq, pred = test[3], preds[3]
letters = lambda track: "".join(HumanAction(int(h)).label[0].upper() for h in track[::3])
print(f"\n{seq.task.value} {seq.outcome.label} -> predicted {pred.outcome.label}")
print("annotated ", letters(seq.human_actions))
print("predicted ", letters(pred.human_track))
