#!/usr/bin/env python3
"""Generate include/sna/detail/unicode_tables.hpp.

The GPT-2 pre-tokenizer pattern relies on \\p{L}, \\p{N} and \\s as implemented
by the `regex` module, so the code point ranges are taken from that module
directly.
"""

import os

import regex

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = os.path.join(ROOT, "include", "sna", "detail", "unicode_tables.hpp")


def ranges(pattern):
    rx = regex.compile(pattern)
    out, start, prev = [], None, None
    for cp in range(0x110000):
        if 0xD800 <= cp <= 0xDFFF:
            hit = False
        else:
            hit = rx.match(chr(cp)) is not None
        if hit:
            if start is None:
                start = cp
            prev = cp
        elif start is not None:
            out.append((start, prev))
            start = None
    if start is not None:
        out.append((start, prev))
    return out


def emit(name, rs):
    lines = [f"inline constexpr CodepointRange {name}[] = {{"]
    row = []
    for a, b in rs:
        row.append(f"{{0x{a:X}, 0x{b:X}}}")
        if len(row) == 6:
            lines.append("    " + ", ".join(row) + ",")
            row = []
    if row:
        lines.append("    " + ", ".join(row) + ",")
    lines.append("};")
    return "\n".join(lines)


def main():
    letters = ranges(r"\p{L}")
    numbers = ranges(r"\p{N}")
    spaces = ranges(r"\s")
    body = "\n\n".join([emit("kLetterRanges", letters), emit("kNumberRanges", numbers),
                        emit("kSpaceRanges", spaces)])
    text = f"""// Generated by tools/gen_unicode_tables.py (regex {regex.__version__}). Do not edit.
#pragma once

#include <cstdint>

namespace sna::detail {{

struct CodepointRange {{
  std::uint32_t first;
  std::uint32_t last;
}};

{body}

}}  // namespace sna::detail
"""
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w") as f:
        f.write(text)
    print(f"{len(letters)} letter, {len(numbers)} number, {len(spaces)} space ranges")


if __name__ == "__main__":
    main()
