#!/usr/bin/env python3
"""Independent per-layer parameter counter for the three architectures.

Counts are derived from the layer list alone (kernel area x in x out + bias),
without running any network code. Used to freeze expected values into the
C++ tests.

usage: param_count.py VARIANT BASE DEPTH [OUT]
"""
import sys


def conv(cin, cout, k):
    return k * k * cin * cout + cout


def upconv(cin, cout):
    return 2 * 2 * cin * cout + cout


def unet_layers(base, depth, out=1):
    layers = []
    width = [base * 2 ** level for level in range(depth + 1)]
    cin = 1
    for level in range(depth):
        layers.append((f"enc{level}.conv1", conv(cin, width[level], 3)))
        layers.append((f"enc{level}.conv2", conv(width[level], width[level], 3)))
        cin = width[level]
    layers.append(("bottleneck.conv1", conv(width[depth - 1], width[depth], 3)))
    layers.append(("bottleneck.conv2", conv(width[depth], width[depth], 3)))
    for level in reversed(range(depth)):
        layers.append((f"dec{level}.up", upconv(width[level + 1], width[level])))
        layers.append((f"dec{level}.conv1", conv(2 * width[level], width[level], 3)))
        layers.append((f"dec{level}.conv2", conv(width[level], width[level], 3)))
    layers.append(("head", conv(width[0], out, 1)))
    return layers


def mnet_layers(base, depth, out=1):
    layers = []
    width = [base * 2 ** level for level in range(depth + 1)]
    for k in range(depth):
        cin = 1 if k == 0 else width[k - 1] + 1
        layers.append((f"enc{k}.conv1", conv(cin, width[k], 3)))
        layers.append((f"enc{k}.conv2", conv(width[k], width[k], 3)))
    layers.append(("bottleneck.conv1", conv(width[depth - 1] + 1, width[depth], 3)))
    layers.append(("bottleneck.conv2", conv(width[depth], width[depth], 3)))
    for k in reversed(range(depth)):
        layers.append((f"dec{k}.conv1", conv(width[k + 1] + width[k], width[k], 3)))
        layers.append((f"dec{k}.conv2", conv(width[k], width[k], 3)))
    for k in range(1, depth):
        layers.append((f"side{k}", conv(width[k], out, 1)))
    layers.append(("head", conv(width[0] + (depth - 1) * out, out, 1)))
    return layers


def count(variant, base, depth, out=1):
    if variant in ("unet", "unet_skip"):
        return sum(n for _, n in unet_layers(base, depth, out))
    if variant == "mnet":
        return sum(n for _, n in mnet_layers(base, depth, out))
    raise ValueError(variant)


if __name__ == "__main__":
    if len(sys.argv) == 1:
        for variant in ("unet", "unet_skip", "mnet"):
            for base, depth in ((1, 1), (2, 2), (4, 4), (8, 4), (16, 4), (32, 4), (64, 4)):
                print(variant, base, depth, count(variant, base, depth))
    else:
        args = sys.argv[1:]
        print(count(args[0], int(args[1]), int(args[2]), int(args[3]) if len(args) > 3 else 1))
