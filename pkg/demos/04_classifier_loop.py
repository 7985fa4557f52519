#!/usr/bin/env python3
"""Close the classification loop: synthesize labelled activity data, train
the reference nearest-centroid model, then classify live frames through the
real subprocess bridge exactly the way an external CNN would be driven.
"""

import sys
import tempfile
import time

import numpy as np

from csiscope import (
    PipelineState,
    builtin_profiles,
    default_chain,
    generate_synthetic_frame,
    poll_results,
    run_chain,
    send_frame,
    spawn_classifier,
    train_centroids,
)
from csiscope.centroid import window_features_from_matrix

BANDS = [(36, 44), (46, 54), (8, 16)]
WINDOW = 9
TRAIN_FRAMES = 540  # one minute per class at 9 Hz

profiles = builtin_profiles(seed=2)
config = default_chain()

print("== training: one synthetic minute per class ==")
windows = []
for prof in profiles.values():
    state = PipelineState()
    amps = []
    for k in range(TRAIN_FRAMES):
        frame = generate_synthetic_frame(prof, k * prof.frame_spacing_us)
        amps.append(run_chain(frame, config, state).amplitudes)
    for k in range(0, TRAIN_FRAMES - WINDOW + 1, WINDOW):
        feats = window_features_from_matrix(np.stack(amps[k:k + WINDOW]), BANDS)
        windows.append((prof.class_id, feats))

model = train_centroids(windows, bands=BANDS, window_len=WINDOW,
                        labels=list(profiles))
model_path = tempfile.mktemp(suffix=".json", prefix="csiscope-model-")
model.save(model_path)
print(f"  {len(windows)} windows -> {model.n_classes} centroids"
      f" -> {model_path}")

print("\n== live classification through the subprocess bridge ==")
handle = spawn_classifier(sys.executable,
                          ["-m", "csiscope.centroid", "--model", model_path])
print(f"  child pid {handle.pid} speaking the F/R line protocol")

state = PipelineState()
target = profiles["pattern-c"]
for k in range(3 * WINDOW):  # three seconds of pattern-c
    frame = generate_synthetic_frame(target, (1000 + k) * target.frame_spacing_us)
    send_frame(handle, run_chain(frame, config, state))

results = []
deadline = time.monotonic() + 5.0
while len(results) < 3 and time.monotonic() < deadline:
    results.extend(poll_results(handle))
    time.sleep(0.02)
handle.close()

for r in results:
    label = model.labels[r.class_id]
    print(f"  window ending at {r.window_end_us} us ->"
          f" class {r.class_id} ({label}), confidence {r.confidence:.3f}")
print(f"\n  sent {handle.frames_sent} frames,"
      f" received {handle.results_received} results,"
      f" {handle.malformed} malformed lines")
