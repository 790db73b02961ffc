#!/usr/bin/env python3
"""Export a Hugging Face GPT-2 checkpoint as a model directory for `sna`.

Writes into OUT:

  config.json              the seven-field config read by the engine
  model.safetensors        float32 tensors under the released names (h.N.*, wte, wpe, ln_f)
  vocab.json, merges.txt   the checkpoint's tokenizer files
  reference_fixtures.json  ids, top-1 token and final-position logits for five
                           canonical prompts, computed by transformers

Usage:
  python3 tools/export_hf_gpt2.py --model gpt2 --out models/gpt2
  python3 tools/export_hf_gpt2.py --model /path/to/local/checkpoint --out models/gpt2

The acceptance binary compares the engine against reference_fixtures.json.
"""

import argparse
import json
import os
import shutil
import tempfile

import torch
from safetensors.torch import save_file
from transformers import GPT2LMHeadModel, GPT2TokenizerFast

CANONICAL_PROMPTS = [
    "The capital of France is",
    "2 + 3 =",
    "Roses are red, violets are",
    "def add(a, b):\n    return",
    'Review: "a gorgeous, witty, seductive movie." Sentiment:',
]


def save_vocab(tok, out):
    """vocab.json and merges.txt, taken from tokenizer.json when the tokenizer
    does not write them itself."""
    with tempfile.TemporaryDirectory() as tmp:
        tok.save_pretrained(tmp)
        have = set(os.listdir(tmp))
        if {"vocab.json", "merges.txt"} <= have:
            for name in ("vocab.json", "merges.txt"):
                shutil.copy(os.path.join(tmp, name), os.path.join(out, name))
            return
        with open(os.path.join(tmp, "tokenizer.json"), encoding="utf-8") as f:
            bpe = json.load(f)["model"]
    with open(os.path.join(out, "vocab.json"), "w", encoding="utf-8") as f:
        json.dump(bpe["vocab"], f, ensure_ascii=False)
    with open(os.path.join(out, "merges.txt"), "w", encoding="utf-8") as f:
        f.write("#version: 0.2\n")
        for m in bpe["merges"]:
            f.write((m if isinstance(m, str) else " ".join(m)) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", default="gpt2", help="hub id or local checkpoint directory")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()

    model = GPT2LMHeadModel.from_pretrained(args.model, torch_dtype=torch.float32).eval()
    tok = GPT2TokenizerFast.from_pretrained(args.model)
    cfg = model.config
    os.makedirs(args.out, exist_ok=True)

    config = {
        "n_layers": cfg.n_layer,
        "d_model": cfg.n_embd,
        "n_heads": cfg.n_head,
        "d_mlp": cfg.n_inner or 4 * cfg.n_embd,
        "vocab_size": cfg.vocab_size,
        "n_ctx": cfg.n_positions,
        "ln_eps": cfg.layer_norm_epsilon,
    }
    with open(os.path.join(args.out, "config.json"), "w") as f:
        json.dump(config, f, indent=1)

    # attn.bias / attn.masked_bias are causal-mask buffers, not parameters
    tensors = {
        k: v.detach().to(torch.float32).contiguous()
        for k, v in model.transformer.state_dict().items()
        if not k.endswith(".attn.bias") and not k.endswith(".attn.masked_bias")
    }
    save_file(tensors, os.path.join(args.out, "model.safetensors"))

    save_vocab(tok, args.out)

    prompts = []
    with torch.no_grad():
        for text in CANONICAL_PROMPTS:
            ids = tok.encode(text)
            logits = model(torch.tensor([ids])).logits[0, -1]
            prompts.append({
                "text": text,
                "ids": ids,
                "top1": int(torch.argmax(logits)),
                "final_logits": [float(x) for x in logits],
            })
    import transformers

    fixtures = {
        "generator": "transformers " + transformers.__version__,
        "model": args.model,
        "config": config,
        "prompts": prompts,
    }
    with open(os.path.join(args.out, "reference_fixtures.json"), "w") as f:
        json.dump(fixtures, f)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
