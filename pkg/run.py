#!/usr/bin/env python
"""
run.py – friendly launcher for the SAS toolbox
==============================================

Just run::

    python run.py

Every menu entry asks for its inputs and then calls the same entry point as
``python -m sas_pipeline``.
"""
from __future__ import annotations
from pathlib import Path
import textwrap

from sas_pipeline.main import main as cli_main
from sas_pipeline.settings import output_root


# ─────────────────────────────────────────────────────────────────────────────
def _ask_path(msg: str, default: str | None = None, must_exist=True) -> Path:
    """Prompt until the user gives a usable path."""
    while True:
        raw = input(f"{msg}{' ['+default+']' if default else ''}: ").strip() or default
        if not raw:
            print("  ✖ please enter a path")
            continue
        p = Path(raw).expanduser().resolve()
        if must_exist and not p.exists():
            print(f"  ✖ {p} does not exist")
        else:
            return p

def _ask_int(msg: str, default: int) -> int:
    while True:
        raw = input(f"{msg} [{default}]: ").strip()
        if not raw:
            return default
        if raw.isdigit():
            return int(raw)
        print("  ✖ not a number")

def _ask_choice(msg: str, choices: list[str], default: str) -> str:
    while True:
        raw = input(f"{msg} ({'/'.join(choices)}) [{default}]: ").strip().lower() or default
        if raw in choices:
            return raw
        print("  ✖ unknown choice")

def _ask_seeds(default: str = "0 1 2 3 4") -> list[str]:
    raw = input(f"Seeds [{default}]: ").strip() or default
    return raw.replace(",", " ").split()


# ─────────────────────────────────────────────────────────────────────────────
def synth() -> list[str]:
    kind = _ask_choice("Dataset kind", ["xor", "gaussian"], "xor")
    seed = _ask_int("Seed", 0)
    out = _ask_path("Output folder", str(output_root() / f"{kind}-seed{seed}"), must_exist=False)
    return ["synth", kind, "--seed", str(seed), "--out", str(out)]

def grid() -> list[str]:
    out = _ask_path("Output folder", str(output_root() / "table5"), must_exist=False)
    return ["table5", "--seeds", *_ask_seeds(), "--out", str(out), "--xlsx"]

def train() -> list[str]:
    manifest = _ask_path("Dataset manifest.json")
    name = _ask_choice("Preset", ["sas-a", "sas-b", "sgc", "gfnn", "mlp"], "sas-a")
    k = input("K (integer or 'auto') [2]: ").strip() or "2"
    seed = _ask_int("Seed", 0)
    return ["train", str(manifest), "--preset", name, "--k", k, "--seed", str(seed)]

def sweep_k() -> list[str]:
    manifest = _ask_path("Dataset manifest.json")
    name = _ask_choice("Preset", ["sas-a", "sas-b"], "sas-a")
    k_max = _ask_int("Largest K", 20)
    return ["sweep-k", str(manifest), "--preset", name, "--k-max", str(k_max),
            "--seeds", *_ask_seeds("0"), "--pdf"]


def main() -> None:
    """Displays the main menu and executes the chosen task."""
    menu = textwrap.dedent("""
        Choose a task
        ─────────────
        1) Generate a synthetic dataset (XOR / Gaussian)
        2) Reproduce the interleaving grid (six pipelines × two datasets)
        3) Train + evaluate one pipeline on a dataset
        4) Accuracy against K (sweep-k)
        5) Quit
    """).strip()

    while True:
        choice = input(f"\n{menu}\n> ").strip()
        match choice:
            case "1": argv = synth()
            case "2": argv = grid()
            case "3": argv = train()
            case "4": argv = sweep_k()
            case "5" | "" | "q": print("Bye!"); return
            case _: print("✖ unknown choice"); continue
        print(f"\n▶ sas_pipeline {' '.join(argv)}\n")
        code = cli_main(argv)
        print("\n✔︎ done." if code == 0 else f"\n✖ failed (exit code {code})")

if __name__ == "__main__":
    main()
