#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 Harvest Contributors
"""Regenerates the end-to-end fixture corpus: snapshot trees plus events.jsonl.

Each repository is a chain of revisions; a pull request's diff is the git
diff between its base revision and the next one. Run from anywhere:

    python3 tests/fixtures/e2e/make_corpus.py
"""

import json
import os
import shutil
import subprocess
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent

# --- acme/mathlib (Python) -------------------------------------------------------

MATHLIB_BASE = {
    "pyproject.toml": """[build-system]
requires = ["setuptools>=61"]
build-backend = "setuptools.build_meta"

[project]
name = "mathlib"
version = "0.1.0"

[tool.setuptools]
packages = ["mathlib"]
""",
    "README.md": "# mathlib\n\nSmall numeric helpers.\n",
    "mathlib/__init__.py": '"""Small numeric helpers."""\n',
    "mathlib/ops.py": """def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def clamp(x, lo, hi):
    if x < lo:
        return lo
    if x > hi:
        return x
    return x
""",
    "mathlib/stats.py": """def mean(values):
    return sum(values) / len(values)
""",
    "tests/test_ops.py": """from mathlib import ops


def test_add():
    assert ops.add(2, 3) == 5


def test_sub():
    assert ops.sub(5, 3) == 2


def test_clamp_lower():
    assert ops.clamp(-4, 0, 10) == 0
""",
    "tests/test_stats.py": """import pytest

from mathlib import stats


def test_mean_basic():
    assert stats.mean([1, 2, 3]) == 2
""",
}

MATHLIB_STEPS = [
    # PR 2: clamp upper bound
    {
        "mathlib/ops.py": MATHLIB_BASE["mathlib/ops.py"].replace("    if x > hi:\n        return x\n",
                                                                 "    if x > hi:\n        return hi\n"),
        "tests/test_ops.py": MATHLIB_BASE["tests/test_ops.py"] + """

def test_clamp_upper():
    assert ops.clamp(42, 0, 10) == 10
""",
    },
    # PR 5: empty mean
    {
        "mathlib/stats.py": """def mean(values):
    if not values:
        raise ValueError("mean of empty sequence")
    return sum(values) / len(values)
""",
        "tests/test_stats.py": MATHLIB_BASE["tests/test_stats.py"] + """

def test_mean_empty():
    with pytest.raises(ValueError):
        stats.mean([])
""",
    },
    # PR 6: median, no linked issue
    {
        "mathlib/stats.py": """def mean(values):
    if not values:
        raise ValueError("mean of empty sequence")
    return sum(values) / len(values)


def median(values):
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2
""",
        "tests/test_stats.py": MATHLIB_BASE["tests/test_stats.py"] + """

def test_mean_empty():
    with pytest.raises(ValueError):
        stats.mean([])


def test_median():
    assert stats.median([3, 1, 2]) == 2
    assert stats.median([4, 1, 3, 2]) == 2.5
""",
    },
    # PR 7: docs only
    {"README.md": "# mathlib\n\nSmall numeric helpers: arithmetic, clamping and summary statistics.\n"},
    # PR 9: linked to an issue that is still open
    {
        "mathlib/ops.py": None,  # filled below
        "tests/test_ops.py": None,
    },
]

# --- acme/textkit (JavaScript) ------------------------------------------------------

TEXTKIT_BASE = {
    "package.json": json.dumps(
        {"name": "textkit", "version": "1.0.0", "license": "Apache-2.0", "scripts": {"test": "node --test"}},
        indent=2) + "\n",
    "src/slug.js": """'use strict';

function slugify(text) {
  return text.toLowerCase().replace(/[^a-z0-9]+/g, '-');
}

module.exports = { slugify };
""",
    "src/truncate.js": """'use strict';

function truncate(text, max) {
  if (text.length <= max) return text;
  return text.slice(0, max) + '\\u2026';
}

module.exports = { truncate };
""",
    "test/slug.test.js": """const test = require('node:test');
const assert = require('node:assert');
const { slugify } = require('../src/slug');

test('slugify lowercases words', () => {
  assert.strictEqual(slugify('Hello World'), 'hello-world');
});
""",
    "test/truncate.test.js": """const test = require('node:test');
const assert = require('node:assert');
const { truncate } = require('../src/truncate');

test('truncate keeps short text', () => {
  assert.strictEqual(truncate('short', 10), 'short');
});
""",
}

SLUG_FIXED = """'use strict';

function slugify(text) {
  return text
    .toLowerCase()
    .replace(/[^a-z0-9]+/g, '-')
    .replace(/^-+|-+$/g, '');
}

module.exports = { slugify };
"""

SLUG_TEST_11 = TEXTKIT_BASE["test/slug.test.js"] + """
test('slugify strips trailing dashes', () => {
  assert.strictEqual(slugify('Hello, World!'), 'hello-world');
});
"""

TEXTKIT_STEPS = [
    # PR 11: trailing dashes
    {"src/slug.js": SLUG_FIXED, "test/slug.test.js": SLUG_TEST_11},
    # PR 15: a test that already passes; comment-only source change
    {
        "src/slug.js": SLUG_FIXED.replace("function slugify(text) {",
                                          "// Lowercase ASCII slug; empty input stays empty.\nfunction slugify(text) {"),
        "test/slug.test.js": SLUG_TEST_11 + """
test('slugify keeps empty input empty', () => {
  assert.strictEqual(slugify(''), '');
});
""",
    },
    # PR 13: word boundaries
    {
        "src/truncate.js": """'use strict';

function truncate(text, max) {
  if (text.length <= max) return text;
  const cut = text.slice(0, max);
  const space = cut.lastIndexOf(' ');
  return (space > 0 ? cut.slice(0, space) : cut) + '\\u2026';
}

module.exports = { truncate };
""",
        "test/truncate.test.js": TEXTKIT_BASE["test/truncate.test.js"] + """
test('truncate respects word boundary', () => {
  assert.strictEqual(truncate('hello brave world', 12), 'hello brave\\u2026');
});
""",
    },
]

# --- acme/ringbuf (Rust) --------------------------------------------------------------

RINGBUF_BASE = {
    "Cargo.toml": """[package]
name = "ringbuf"
version = "0.1.0"
edition = "2021"
license = "MIT"

[dependencies]
""",
    "Cargo.lock": """# This file is automatically @generated by Cargo.
# It is not intended for manual editing.
version = 3

[[package]]
name = "ringbuf"
version = "0.1.0"
""",
    "src/lib.rs": """/// Fixed-capacity FIFO buffer.
pub struct RingBuf<T> {
    items: Vec<T>,
    cap: usize,
}

impl<T> RingBuf<T> {
    pub fn new(cap: usize) -> Self {
        RingBuf { items: Vec::with_capacity(cap), cap }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        assert!(self.items.len() < self.cap, "ring buffer full");
        self.items.push(item);
    }

    pub fn pop(&mut self) -> Option<T> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items.remove(0))
        }
    }
}
""",
    "tests/ring.rs": """use ringbuf::RingBuf;

#[test]
fn push_then_pop() {
    let mut r = RingBuf::new(2);
    r.push(1);
    r.push(2);
    assert_eq!(r.pop(), Some(1));
    assert_eq!(r.len(), 1);
}

#[test]
fn pop_empty_is_none() {
    let mut r: RingBuf<u8> = RingBuf::new(1);
    assert!(r.is_empty());
    assert_eq!(r.pop(), None);
}
""",
}

RINGBUF_STEPS = [
    {
        "src/lib.rs": RINGBUF_BASE["src/lib.rs"].replace(
            """        assert!(self.items.len() < self.cap, "ring buffer full");
        self.items.push(item);""",
            """        if self.items.len() == self.cap {
            self.items.remove(0);
        }
        self.items.push(item);"""),
        "tests/ring.rs": RINGBUF_BASE["tests/ring.rs"] + """
#[test]
fn push_overwrites_when_full() {
    let mut r = RingBuf::new(2);
    r.push(1);
    r.push(2);
    r.push(3);
    assert_eq!(r.pop(), Some(2));
    assert_eq!(r.pop(), Some(3));
}
""",
    },
]


def write_tree(root: Path, files: dict):
    for rel, text in files.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")


def git(cwd, *args):
    env = dict(os.environ, GIT_AUTHOR_NAME="f", GIT_AUTHOR_EMAIL="f@x", GIT_COMMITTER_NAME="f",
               GIT_COMMITTER_EMAIL="f@x", GIT_AUTHOR_DATE="2024-01-01T00:00:00Z",
               GIT_COMMITTER_DATE="2024-01-01T00:00:00Z")
    return subprocess.run(["git", *args], cwd=cwd, env=env, check=True, capture_output=True, text=True).stdout


def build_chain(base: dict, steps: list):
    """Returns (states, diffs): states[i] is the file map at revision i, diffs[i] turns i into i+1."""
    states = [dict(base)]
    for step in steps:
        nxt = dict(states[-1])
        nxt.update(step)
        states.append(nxt)
    diffs = []
    with tempfile.TemporaryDirectory() as tmp:
        git(tmp, "init", "-q")
        shas = []
        for st in states:
            for child in Path(tmp).iterdir():
                if child.name != ".git":
                    shutil.rmtree(child) if child.is_dir() else child.unlink()
            write_tree(Path(tmp), st)
            git(tmp, "add", "-A")
            git(tmp, "commit", "-q", "--allow-empty", "-m", "rev")
            shas.append(git(tmp, "rev-parse", "HEAD").strip())
        for a, b in zip(shas, shas[1:]):
            diffs.append(git(tmp, "diff", "--no-color", "--no-renames", a, b))
    return states, diffs


def main():
    snaps = HERE / "snapshots"
    if snaps.exists():
        shutil.rmtree(snaps)

    # PR 9 builds on revision m5 (after the README change) with a test.
    MATHLIB_STEPS[4] = {
        "mathlib/ops.py": MATHLIB_STEPS[0]["mathlib/ops.py"] + """

def mul(a, b):
    return a * b
""",
        "tests/test_ops.py": MATHLIB_STEPS[0]["tests/test_ops.py"] + """

def test_mul():
    assert ops.mul(3, 4) == 12
""",
    }

    m_states, m_diffs = build_chain(MATHLIB_BASE, MATHLIB_STEPS)
    t_states, t_diffs = build_chain(TEXTKIT_BASE, TEXTKIT_STEPS)
    r_states, r_diffs = build_chain(RINGBUF_BASE, RINGBUF_STEPS)

    # Revisions that serve as a base for validation need a snapshot tree.
    for name, states, labels in (("acme__mathlib", m_states, ["m1", "m2", "m3"]),
                                 ("acme__textkit", t_states, ["t1", "t2", "t3"]),
                                 ("acme__ringbuf", r_states, ["r1"])):
        for i, label in enumerate(labels):
            write_tree(snaps / name / label, states[i])

    ev = []
    repo = lambda name, lang, stars, closed, lic: ev.append(
        {"kind": "repo", "full_name": name, "primary_language": lang, "stars": stars,
         "closed_issue_count": closed, "license_id": lic})
    issue = lambda r, n, title, body, state, created: ev.append(
        {"kind": "issue", "repo": r, "number": n, "title": title, "body": body, "state": state,
         "created_at": created})
    pr = lambda r, n, title, body, base, diff, merged: ev.append(
        {"kind": "pull_request", "repo": r, "number": n, "title": title, "body": body, "merged": True,
         "merge_time": merged, "base_commit": base, "diff_text": diff})

    repo("acme/mathlib", "Python", 40, 20, "MIT")
    repo("acme/textkit", "JavaScript", 30, 16, "Apache-2.0")
    repo("acme/ringbuf", "Rust", 12, 3, "MIT")
    repo("acme/closedsrc", "Python", 100, 50, "LicenseRef-Proprietary")
    repo("acme/tinyjs", "JavaScript", 5, 40, "MIT")

    issue("acme/mathlib", 1, "clamp ignores the upper bound",
          "Calling clamp(42, 0, 10) returns 42. Values above the upper bound should be clamped to the upper "
          "bound, so the expected result is 10.", "resolved", "2024-01-20T09:00:00Z")
    issue("acme/mathlib", 3, "mean of an empty list raises ZeroDivisionError",
          "stats.mean([]) crashes with ZeroDivisionError. It should raise ValueError with a clear message, the "
          "same way the standard library does (see https://docs.python.org/3/library/statistics.html#statistics.mean).",
          "resolved", "2024-02-20T09:00:00Z")
    issue("acme/mathlib", 8, "add a multiply helper", "We have add and sub but no mul.", "open",
          "2024-03-12T09:00:00Z")
    pr("acme/mathlib", 2, "Clamp values above the upper bound", "Fixes #1", "m1", m_diffs[0],
       "2024-02-01T10:00:00Z")
    pr("acme/mathlib", 5, "Raise ValueError for the mean of an empty list", "Closes #3.", "m2", m_diffs[1],
       "2024-03-01T10:00:00Z")
    pr("acme/mathlib", 6, "Add a median helper",
       "Adds median() next to mean(); handles even-length input by averaging the middle pair.", "m3", m_diffs[2],
       "2024-03-10T10:00:00Z")
    pr("acme/mathlib", 7, "Expand README", "Describe the modules.", "m4", m_diffs[3], "2024-03-11T10:00:00Z")
    pr("acme/mathlib", 9, "Add mul", "fixes #8", "m5", m_diffs[4], "2024-03-13T10:00:00Z")

    issue("acme/textkit", 10, "slugify leaves trailing dashes",
          "slugify('Hello, World!') returns 'hello-world-' with a dash at the end. Leading and trailing "
          "separators should be removed so the result is 'hello-world'.", "resolved", "2024-03-25T09:00:00Z")
    issue("acme/textkit", 14, "slugify of an empty string",
          "What does slugify return for ''? It should stay an empty string; please cover it with a test.",
          "resolved", "2024-04-05T09:00:00Z")
    issue("acme/textkit", 12, "truncate is weird", "sometimes it does not work, please fix", "resolved",
          "2024-04-12T09:00:00Z")
    pr("acme/textkit", 11, "Strip leading and trailing dashes", "Fixes #10", "t1", t_diffs[0],
       "2024-04-02T10:00:00Z")
    pr("acme/textkit", 15, "Test slugify on empty input", "Resolves #14", "t2", t_diffs[1],
       "2024-04-10T10:00:00Z")
    pr("acme/textkit", 13, "Cut truncated text at a word boundary", "Resolves #12", "t3", t_diffs[2],
       "2024-04-20T10:00:00Z")

    issue("acme/ringbuf", 1, "push on a full buffer panics",
          "RingBuf::push panics with 'ring buffer full' once capacity is reached. A ring buffer should drop "
          "the oldest element and keep the newest ones instead.", "resolved", "2024-05-01T09:00:00Z")
    pr("acme/ringbuf", 2, "Overwrite the oldest element when full", "fixes #1", "r1", r_diffs[0],
       "2024-05-05T10:00:00Z")

    lic_diff = ("--- a/tests/test_core.py\n+++ b/tests/test_core.py\n@@ -1 +1,2 @@\n def test_a(): pass\n"
                "+def test_b(): pass\n--- a/core.py\n+++ b/core.py\n@@ -1 +1 @@\n-x = 1\n+x = 2\n")
    issue("acme/closedsrc", 2, "core value is wrong", "x should be 2, not 1.", "resolved", "2024-01-05T09:00:00Z")
    pr("acme/closedsrc", 3, "Set x to 2", "Fixes #2", "p1", lic_diff, "2024-01-06T10:00:00Z")

    js_diff = ("--- a/test/a.test.js\n+++ b/test/a.test.js\n@@ -1 +1,2 @@\n // a\n+// b\n"
               "--- a/index.js\n+++ b/index.js\n@@ -1 +1 @@\n-module.exports = 1;\n+module.exports = 2;\n")
    issue("acme/tinyjs", 1, "export should be 2", "index.js exports 1 but callers expect 2.", "resolved",
          "2024-01-07T09:00:00Z")
    pr("acme/tinyjs", 2, "Export 2", "Fixes #1", "j1", js_diff, "2024-01-08T10:00:00Z")

    with open(HERE / "events.jsonl", "w", encoding="utf-8") as f:
        for e in ev:
            f.write(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
