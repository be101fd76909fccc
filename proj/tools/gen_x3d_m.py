#!/usr/bin/env python3
"""Emit the bundled X3D-M model description (data/x3d_m.json).

Shapes follow the published X3D-M architecture table: 16x256x256 RGB clip,
stage widths 24/48/96/192, bottleneck widths 54/108/216/432, stage depths
3/5/11/7, squeeze-excitation on every other block.

Layer accounting used by this description:
  * batch norm is folded into the preceding convolution;
  * the block output is the residual Add (no trailing activation);
  * the squeeze-excitation bottleneck is two point-wise convolutions without
    an intermediate activation.
With these conventions the network is exactly 244 layers.

Usage: gen_x3d_m.py [output.json]
"""

import json
import sys

NUM_CLASSES = 101


def shape(c, d, h, w):
    return [c, d, h, w]


def conv_out(sp, ks, sr, pad, cout):
    c, d, h, w = sp
    dims = [d, h, w]
    out = [(dims[i] + 2 * pad[i] - ks[i]) // sr[i] + 1 for i in range(3)]
    return [cout] + out


def se_width(width):
    # round_width(width * 1/16, divisor=8) as used by the reference X3D code
    scaled = width * 0.0625
    new = max(8, int(scaled + 4) // 8 * 8)
    if new < 0.9 * scaled:
        new += 8
    return new


class Builder:
    def __init__(self):
        self.layers = []

    def conv(self, lid, src, sp_in, cout, ks, sr=(1, 1, 1), pad=(0, 0, 0), gp=1):
        sp_out = conv_out(sp_in, ks, sr, pad, cout)
        self.layers.append({
            "id": lid,
            "kind": "Conv3D",
            "inputs": [src],
            "sp_in": [sp_in],
            "sp_out": sp_out,
            "params": {"ks": list(ks), "sr": list(sr), "pad": list(pad), "gp": gp},
            "weights": [cout, sp_in[0] // gp] + list(ks),
        })
        return lid, sp_out

    def act(self, lid, src, sp, t):
        self.layers.append({
            "id": lid, "kind": "Activation", "inputs": [src],
            "sp_in": [sp], "sp_out": sp, "params": {"t": t},
        })
        return lid, sp

    def eltwise(self, lid, srcs, shapes, t, m):
        self.layers.append({
            "id": lid, "kind": "ElementWise", "inputs": list(srcs),
            "sp_in": list(shapes), "sp_out": shapes[0], "params": {"t": t, "m": m},
        })
        return lid, shapes[0]

    def gap(self, lid, src, sp):
        out = [sp[0], 1, 1, 1]
        self.layers.append({
            "id": lid, "kind": "GlobalAvgPool", "inputs": [src],
            "sp_in": [sp], "sp_out": out, "params": {},
        })
        return lid, out


def build():
    b = Builder()
    x, sp = "input", shape(3, 16, 256, 256)

    x, sp = b.conv("stem.conv_xy", x, sp, 24, (1, 3, 3), (1, 2, 2), (0, 1, 1))
    x, sp = b.conv("stem.conv_t", x, sp, 24, (5, 1, 1), (1, 1, 1), (2, 0, 0), gp=24)
    x, sp = b.act("stem.relu", x, sp, "Relu")

    widths = [24, 48, 96, 192]
    inner = [54, 108, 216, 432]
    depths = [3, 5, 11, 7]
    for s in range(4):
        for i in range(depths[s]):
            p = f"s{s + 2}.b{i}"
            stride = (1, 2, 2) if i == 0 else (1, 1, 1)
            block_in, sp_in = x, sp
            y, ys = b.conv(f"{p}.conv_a", block_in, sp_in, inner[s], (1, 1, 1))
            y, ys = b.act(f"{p}.relu_a", y, ys, "Relu")
            y, ys = b.conv(f"{p}.conv_b", y, ys, inner[s], (3, 3, 3), stride, (1, 1, 1), gp=inner[s])
            if i % 2 == 0:
                se = se_width(inner[s])
                g, gs = b.gap(f"{p}.se.pool", y, ys)
                g, gs = b.conv(f"{p}.se.fc1", g, gs, se, (1, 1, 1))
                g, gs = b.conv(f"{p}.se.fc2", g, gs, inner[s], (1, 1, 1))
                g, gs = b.act(f"{p}.se.sigmoid", g, gs, "Sigmoid")
                y, ys = b.eltwise(f"{p}.se.mul", [y, g], [ys, gs], "Mul", "Broadcast")
            y, ys = b.act(f"{p}.swish", y, ys, "Swish")
            y, ys = b.conv(f"{p}.conv_c", y, ys, widths[s], (1, 1, 1))
            skip, skip_sp = block_in, sp_in
            if i == 0:
                skip, skip_sp = b.conv(f"{p}.proj", block_in, sp_in, widths[s], (1, 1, 1), stride)
            x, sp = b.eltwise(f"{p}.add", [y, skip], [ys, skip_sp], "Add", "Normal")

    x, sp = b.conv("head.conv_5", x, sp, 432, (1, 1, 1))
    x, sp = b.act("head.relu_5", x, sp, "Relu")
    x, sp = b.gap("head.pool", x, sp)
    x, sp = b.conv("head.lin_5", x, sp, 2048, (1, 1, 1))
    x, sp = b.act("head.relu_lin", x, sp, "Relu")
    x, sp = b.conv("head.proj", x, sp, NUM_CLASSES, (1, 1, 1))

    return {
        "name": "x3d_m",
        "input_shape": [3, 16, 256, 256],
        "workload_gop": {"reported": 6.2, "table": 6.4},
        "layers": b.layers,
    }


def main():
    model = build()
    out = sys.argv[1] if len(sys.argv) > 1 else "x3d_m.json"
    with open(out, "w") as f:
        json.dump(model, f, indent=1)
        f.write("\n")
    print(f"{len(model['layers'])} layers -> {out}")


if __name__ == "__main__":
    main()
