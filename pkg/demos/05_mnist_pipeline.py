"""Full MNIST pipeline: IDX loading, per-epoch binarization, 1% labels.

Needs the standard MNIST IDX files.  Point IBPDGM_MNIST_DIR at a directory
containing train-images-idx3-ubyte, train-labels-idx1-ubyte,
t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte, then
Run:  IBPDGM_MNIST_DIR=/path/to/mnist python demos/05_mnist_pipeline.py

This is the desk-scale version of the benchmark protocol: a 20k-image
subset, K=50, 30 epochs.  Expect a long single-core run (an hour or two).
"""

import os
import sys

from ibpdgm import training

mnist_dir = os.environ.get("IBPDGM_MNIST_DIR", "")
paths = {
    "images": "train-images-idx3-ubyte",
    "labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
if not mnist_dir or not all(
        os.path.exists(os.path.join(mnist_dir, p)) for p in paths.values()):
    print("set IBPDGM_MNIST_DIR to a directory with the four MNIST IDX files")
    sys.exit(1)

cfg = training.RunConfig(
    dataset="idx",
    images=os.path.join(mnist_dir, paths["images"]),
    labels=os.path.join(mnist_dir, paths["labels"]),
    test_images=os.path.join(mnist_dir, paths["test_images"]),
    test_labels=os.path.join(mnist_dir, paths["test_labels"]),
    limit_train=20_000,
    truncation=50, hidden=500, alpha=1.0, sigma_theta_sq=1e-2,
    labeled_fraction=0.01, mc_samples=4, eval_mc_samples=2,
    lr=3e-4, epochs=30, batch_size=100, seed=0, out="runs/demo05",
)

print("training on a 20k MNIST subset, 1% labeled, K=50 ...")
result = training.train(cfg, log=lambda s: print("  " + s))
last = result.history[-1]
print()
print(f"test error: {last[8]:.2f}%   active components: {int(last[9])}")
print(f"metrics: {result.metrics_path}")
