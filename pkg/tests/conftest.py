"""Shared test fixtures."""

from __future__ import annotations

import textwrap
from pathlib import Path

import pytest

from cq_hoare.lang.parser import parse
from cq_hoare.lang.syntax import SourceProgram

BELL = textwrap.dedent("""\
    program bell
      qvar q, r : qudit(2)
      var x, y : int range 0..1
    body
      q, r := 0;
      q *= H;
      q, r *= CNOT;
      x := measure q;
      y := measure r
    end
    """)

COIN = textwrap.dedent("""\
    program coin
      qvar q : qudit(2)
      var x : int range 0..1
      var n : int range 0..3
    body
      q := 0;
      n := 0;
      x := 1;
      while x = 1 and n < 3 do
        q *= H;
        x := measure q;
        n := n + 1
      end
    end
    """)

FLIP = textwrap.dedent("""\
    program flip
      qvar q : qudit(2)
      var x : int range 0..1
      var b : bool
    body
      b :=$ {true : 1/2, false : 1/2};
      if b then
        q *= X
      end;
      x := measure q
    end
    """)


def programs() -> dict[str, str]:
    return {"bell": BELL, "coin": COIN, "flip": FLIP}


@pytest.fixture()
def bell() -> SourceProgram:
    return parse(BELL)


@pytest.fixture()
def coin() -> SourceProgram:
    return parse(COIN)


@pytest.fixture()
def flip() -> SourceProgram:
    return parse(FLIP)


@pytest.fixture()
def bell_files(tmp_path: Path) -> Path:
    """A directory holding bell.cq plus assertion and state files for it."""
    (tmp_path / "bell.cq").write_text(BELL)
    (tmp_path / "agree.cqa").write_text(
        textwrap.dedent("""\
        // the two outcomes agree
        (x = y) : 1
        """)
    )
    (tmp_path / "top.cqa").write_text("(true) : 1\n")
    (tmp_path / "half.cqa").write_text("(true) : 1/2\n")
    (tmp_path / "differ.cqa").write_text("(x != y) : 1\n")
    (tmp_path / "start.cqs").write_text("{x=0, y=0} : ket(0, 0) @ q, r\n")
    return tmp_path
