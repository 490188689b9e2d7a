"""Run the stock audio-to-image scenario end to end and print the manifest.

Creates a placeholder audio attachment, drives it through the full
pipeline with the bundled config (scripted language backend, mock
generators), and leaves the artifacts, manifest.json, and trace.json in
the workspace directory.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from modalkit.config import build_language_backend, build_registry, load_app_config
from modalkit.instruct import Attachment
from modalkit.media import render_placeholder
from modalkit.meta import Modality
from modalkit.pipeline import UserRequest, run
from modalkit.zoo import manifest_json


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="config file (defaults to the bundled one)")
    parser.add_argument("--workspace", default="runs/demo")
    parser.add_argument("--seed", type=int, help="override the config seed")
    args = parser.parse_args()

    app = load_app_config(args.config)
    seed = app.seed if args.seed is None else args.seed
    workspace = Path(args.workspace)
    workspace.mkdir(parents=True, exist_ok=True)

    wav = workspace / "cat_meowing.wav"
    wav.write_bytes(render_placeholder("text-to-audio", "a cat meowing", seed))

    request = UserRequest(
        instruction="Generate an image of an animal based on the provided vocalization.",
        attachments=(Attachment(str(wav), Modality.AUDIO),),
    )
    response, trace = run(
        request,
        build_registry(app),
        build_language_backend(app),
        workspace,
        cfg=app.pipeline,
        seed=seed,
    )
    print(manifest_json(response), end="")
    print(f"workspace: {workspace}")
    print(f"stages: {' -> '.join(s.name for s in trace.stages)}")
    return 1 if response.diagnostics else 0


if __name__ == "__main__":
    raise SystemExit(main())
