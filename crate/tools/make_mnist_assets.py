"""Builds the small MNIST test assets under crates/core/testdata.

Input is the digits/ directory of the npm `mnist` package (1.1.0), which holds
about 1000 images per class as JSON arrays of grey levels in [0, 1]. Output:

  t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte   held-out test split (IDX)
  mnist_small.spdw                                  trained weights
  baseline.txt                                      float64 top-1 counts

usage: python3 tools/make_mnist_assets.py <digits dir> [out dir]
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

SEED = 20240611
TEST_PER_CLASS = 200

KIND_DENSE, KIND_CONV, KIND_RELU, KIND_POOL, KIND_FLATTEN = range(5)


def load_digits(root):
    images, labels = [], []
    for digit in range(10):
        data = json.loads((root / f"{digit}.json").read_text())["data"]
        pixels = np.rint(np.asarray(data, dtype=np.float64) * 255.0).astype(np.uint8)
        pixels = pixels.reshape(-1, 28, 28)
        images.append(pixels)
        labels.append(np.full(len(pixels), digit, dtype=np.uint8))
    return images, labels


def split(images, labels, rng):
    train_x, train_y, test_x, test_y = [], [], [], []
    for x, y in zip(images, labels):
        order = rng.permutation(len(x))
        test_x.append(x[order[:TEST_PER_CLASS]])
        test_y.append(y[order[:TEST_PER_CLASS]])
        train_x.append(x[order[TEST_PER_CLASS:]])
        train_y.append(y[order[TEST_PER_CLASS:]])
    test_x, test_y = np.concatenate(test_x), np.concatenate(test_y)
    order = rng.permutation(len(test_x))
    return (
        np.concatenate(train_x),
        np.concatenate(train_y),
        test_x[order],
        test_y[order],
    )


def write_idx(path, array):
    magic = 0x0803 if array.ndim == 3 else 0x0801
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for dim in array.shape:
            f.write(struct.pack(">I", dim))
        f.write(array.astype(np.uint8).tobytes())


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 3)
        self.conv2 = nn.Conv2d(8, 8, 3)
        self.fc1 = nn.Linear(200, 32)
        self.fc2 = nn.Linear(32, 10)
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        x = torch.flatten(x, 1)
        return self.fc2(torch.relu(self.fc1(x)))


def train(x, y):
    torch.manual_seed(SEED)
    model = Net()
    xs = torch.tensor(x, dtype=torch.float32).unsqueeze(1) / 255.0
    ys = torch.tensor(y, dtype=torch.long)
    opt = torch.optim.Adam(model.parameters(), lr=2e-3, weight_decay=1e-4)
    gen = torch.Generator().manual_seed(SEED)
    for epoch in range(12):
        order = torch.randperm(len(xs), generator=gen)
        total = 0.0
        for i in range(0, len(xs), 64):
            idx = order[i : i + 64]
            opt.zero_grad()
            loss = nn.functional.cross_entropy(model(xs[idx]), ys[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        print(f"epoch {epoch}: loss {total / len(xs):.4f}")
    return model


def layer_list(model):
    p = lambda t: t.detach().numpy().astype(np.float32)
    return [
        (KIND_CONV, 1, 0, [p(model.conv1.weight), p(model.conv1.bias)]),
        (KIND_RELU, 1, 0, []),
        (KIND_POOL, 1, 0, []),
        (KIND_CONV, 1, 0, [p(model.conv2.weight), p(model.conv2.bias)]),
        (KIND_RELU, 1, 0, []),
        (KIND_POOL, 1, 0, []),
        (KIND_FLATTEN, 1, 0, []),
        (KIND_DENSE, 1, 0, [p(model.fc1.weight), p(model.fc1.bias)]),
        (KIND_RELU, 1, 0, []),
        (KIND_DENSE, 1, 0, [p(model.fc2.weight), p(model.fc2.bias)]),
    ]


def write_spdw(path, layers, input_shape):
    with open(path, "wb") as f:
        f.write(b"SPDW")
        f.write(struct.pack("<III", 1, len(layers), len(input_shape)))
        f.write(struct.pack(f"<{len(input_shape)}I", *input_shape))
        for kind, stride, padding, tensors in layers:
            f.write(struct.pack("<BBBBI", kind, 0, stride, padding, len(tensors)))
            for t in tensors:
                f.write(struct.pack("<I", t.ndim))
                f.write(struct.pack(f"<{t.ndim}I", *t.shape))
        for _, _, _, tensors in layers:
            for t in tensors:
                f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def conv(x, w, b):
    oc, ic, kh, kw = w.shape
    _, h, wd = x.shape
    out = np.empty((oc, h - kh + 1, wd - kw + 1))
    for i in range(out.shape[1]):
        for j in range(out.shape[2]):
            patch = x[:, i : i + kh, j : j + kw].reshape(-1)
            out[:, i, j] = w.reshape(oc, -1) @ patch + b
    return out


def pool(x):
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    return x[:, : 2 * h2, : 2 * w2].reshape(c, h2, 2, w2, 2).max(axis=(2, 4))


def float_predict(layers, image):
    x = image.astype(np.float64).reshape(1, 28, 28) / 255.0
    for kind, _, _, tensors in layers:
        t = [a.astype(np.float64) for a in tensors]
        if kind == KIND_CONV:
            x = conv(x, t[0], t[1])
        elif kind == KIND_RELU:
            x = np.maximum(x, 0.0)
        elif kind == KIND_POOL:
            x = pool(x)
        elif kind == KIND_FLATTEN:
            x = x.reshape(-1)
        else:
            x = t[0] @ x + t[1]
    return int(np.argmax(x))


def main():
    src = Path(sys.argv[1])
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else Path("crates/core/testdata")
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    train_x, train_y, test_x, test_y = split(*load_digits(src), rng)
    write_idx(out / "t10k-images-idx3-ubyte", test_x)
    write_idx(out / "t10k-labels-idx1-ubyte", test_y)

    layers = layer_list(train(train_x, train_y))
    write_spdw(out / "mnist_small.spdw", layers, (1, 28, 28))

    predictions = [float_predict(layers, img) for img in test_x]
    correct = np.asarray(predictions) == test_y
    lines = [f"samples={n} correct={int(correct[:n].sum())}" for n in (1000, len(test_x))]
    (out / "baseline.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


if __name__ == "__main__":
    main()
