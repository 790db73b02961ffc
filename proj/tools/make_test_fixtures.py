#!/usr/bin/env python3
"""Regenerate the reference fixtures under tests/data.

Uses the Hugging Face `transformers` GPT-2 implementation as an independent
reference:

  tokenizer_fixtures.json  - GPT2Tokenizer ids for a fixed 100-string corpus
  tiny_hf/                 - a random 2-layer GPT-2 saved with the released
                             tensor names, plus logits computed by transformers
                             (clean and with a neuron doubled via a forward hook)

Run from the repository root:  python3 tools/make_test_fixtures.py
"""

import json
import os
import random

import torch
from safetensors.torch import save_file
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ASSETS = os.path.join(ROOT, "assets", "gpt2")
OUT = os.path.join(ROOT, "tests", "data")


def tokenizer_corpus():
    fixed = [
        "",
        " positive",
        " negative",
        "positive",
        "Review:",
        "Review: \"a gorgeous, witty, seductive movie.\" Sentiment:",
        " 7",
        "7",
        "x",
        " x",
        "2 + 2 =",
        " 4",
        "47 + 83 =",
        "Hello, world!",
        "The quick brown fox jumps over the lazy dog.",
        "I'm sure they'll say it's fine, we've seen what you'd do.",
        "DON'T SHOUT'S",
        "  two leading spaces",
        "trailing spaces   ",
        "tabs\tand\nnewlines\n\n",
        "multiple     interior     spaces",
        "\n",
        " ",
        "   ",
        "def add(a, b):\n    return a + b",
        "for i in range(10): print(i)",
        "x = [1, 2, 3]; y = {'k': v}",
        "Roses are red, violets are",
        "Once upon a midnight dreary, while I pondered, weak and weary",
        "If all cats are animals and Tom is a cat, then Tom is an",
        "café naïve résumé",
        "Grüße aus München",
        "日本語のテキスト",
        "中文字符测试",
        "한국어 문장",
        "Привет, мир",
        "Ελληνικά γράμματα",
        "עברית",
        "العربية",
        "emoji 😀🎉 party",
        "👍🏽",
        "math: ∑ x² ≤ ∞",
        "1234567890",
        "3.14159 and 2.71828",
        "$100,000.00",
        "email@example.com",
        "https://example.org/path?q=1&r=2",
        "<html><body>hi</body></html>",
        "C++ and C# and F#",
        "'s 't 're 've 'm 'll 'd",
        "it's",
        "rock'n'roll",
        "!!!???...",
        "-- -- --",
        "a b",  # non-breaking space
        "zero​width",
        "　ideographic space",
        "mixed123abc456",
        "ALLCAPS lowercase MiXeD",
        "Sentiment: positive",
        "Sentiment: negative",
        "The answer is 42.",
        "Question: What is 5 + 3? Answer:",
        "Roman numerals: XIV, MMXXIV",
        "½ ⅓ ¼ Ⅻ ①",
        "١٢٣ ٤٥٦",
        "superscript x²³",
    ]
    rng = random.Random(1234)
    alphabet = (
        list("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789")
        + list(" \t\n.,;:!?'\"()[]{}-_+=*/\\|@#$%^&~`")
        + ["é", "ß", "ø", "ñ", "λ", "Ω", "ж", "中", "日", "😀", " ", " ", "²", "Ⅻ"]
    )
    while len(fixed) < 100:
        n = rng.randint(1, 24)
        fixed.append("".join(rng.choice(alphabet) for _ in range(n)))
    return fixed


def make_tokenizer_fixtures():
    tok = GPT2Tokenizer(os.path.join(ASSETS, "vocab.json"), os.path.join(ASSETS, "merges.txt"))
    cases = [{"text": t, "ids": tok.encode(t)} for t in tokenizer_corpus()]
    first = []
    for answer, space in [("positive", True), ("negative", True), ("7", True), ("x", False), ("4", True)]:
        text = (" " if space else "") + answer
        first.append({"answer": answer, "prepend_space": space, "id": tok.encode(text)[0]})
    with open(os.path.join(OUT, "tokenizer_fixtures.json"), "w", encoding="utf-8") as f:
        json.dump({"encode": cases, "first_answer_token": first}, f, ensure_ascii=False, indent=1)


def make_tiny_hf_model():
    torch.manual_seed(7)
    cfg = GPT2Config(
        vocab_size=64,
        n_positions=16,
        n_embd=8,
        n_layer=2,
        n_head=2,
        n_inner=32,
        activation_function="gelu_new",
        layer_norm_epsilon=1e-5,
        resid_pdrop=0.0,
        embd_pdrop=0.0,
        attn_pdrop=0.0,
        initializer_range=0.4,
    )
    model = GPT2LMHeadModel(cfg).eval()
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("ln_1.weight") or name.endswith("ln_2.weight") or name.endswith("ln_f.weight"):
                p.copy_(1.0 + 0.3 * torch.randn_like(p))
            elif name.endswith(".bias"):
                p.copy_(0.2 * torch.randn_like(p))

    out_dir = os.path.join(OUT, "tiny_hf")
    os.makedirs(out_dir, exist_ok=True)
    tensors = {}
    for name, t in model.transformer.state_dict().items():
        if name.endswith(".attn.bias") or name.endswith(".attn.masked_bias"):
            continue
        tensors[name] = t.detach().contiguous().float()
    save_file(tensors, os.path.join(out_dir, "model.safetensors"), metadata={"format": "pt"})
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump({"n_layers": 2, "d_model": 8, "n_heads": 2, "d_mlp": 32,
                   "vocab_size": 64, "n_ctx": 16, "ln_eps": 1e-5}, f, indent=1)

    sequences = [[5], [1, 2, 3, 4, 5, 6], [63, 0, 17, 17, 42, 8, 9, 30, 31, 12, 11, 60]]
    cases = []
    for seq in sequences:
        ids = torch.tensor([seq])
        with torch.no_grad():
            clean = model(ids).logits[0]

        def double_neuron(_module, _inp, out):
            out = out.clone()
            out[..., 5] *= 2.0
            return out

        handle = model.transformer.h[1].mlp.act.register_forward_hook(double_neuron)
        with torch.no_grad():
            hooked = model(ids).logits[0]
        handle.remove()

        captured = {}

        def capture(_module, _inp, out):
            captured["act"] = out[0].detach().clone()

        handle = model.transformer.h[0].mlp.act.register_forward_hook(capture)
        with torch.no_grad():
            model(ids)
        handle.remove()

        cases.append({
            "tokens": seq,
            "logits": clean.tolist(),
            "logits_layer1_neuron5_x2": hooked.tolist(),
            "layer0_mlp_post": captured["act"].tolist(),
        })
    with open(os.path.join(out_dir, "expected.json"), "w") as f:
        json.dump({"cases": cases}, f)


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    make_tokenizer_fixtures()
    make_tiny_hf_model()
    print("fixtures written to", OUT)
