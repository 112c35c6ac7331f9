#!/usr/bin/env python3
"""Convert the pytorch-fid Inception-v3 weights to safetensors for artextend.

    pip install torch safetensors
    python tools/convert_inception.py pt_inception-2015-12-05-6726825d.pth inception.safetensors

The input is the state dict pytorch-fid downloads for FIDInceptionA..E.
Tensor names are kept as-is (e.g. Conv2d_1a_3x3.conv.weight); batch-norm
running stats are required, num_batches_tracked entries are dropped.
"""
import argparse
import sys

import torch
from safetensors.torch import save_file


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("state_dict", help="pytorch-fid .pth file")
    ap.add_argument("out", help="output .safetensors path")
    args = ap.parse_args()

    sd = torch.load(args.state_dict, map_location="cpu", weights_only=True)
    tensors = {
        k: v.detach().to(torch.float32).contiguous()
        for k, v in sd.items()
        if not k.endswith("num_batches_tracked") and not k.startswith("fc.")
    }
    if "Conv2d_1a_3x3.conv.weight" not in tensors:
        print("not a pytorch-fid Inception state dict", file=sys.stderr)
        return 1
    save_file(tensors, args.out)
    print(f"wrote {len(tensors)} tensors to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
