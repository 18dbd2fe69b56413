"""Write a self-contained synthetic fixture directory.

The output holds embedding matrices, metadata, a class set, and a config.ini
that the CLI consumes directly:

    python3 scripts/make_fixture.py --out /tmp/fixture --image-noise 0.6
    xmodal eval --config /tmp/fixture/config.ini
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from xmodal.synth import SynthSpec, write_synthetic


def main(argv=None):
    spec = SynthSpec()
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="fixture directory to create")
    parser.add_argument("--classes", type=int, default=spec.num_classes)
    parser.add_argument("--per-class", type=int, default=spec.corpus_per_class)
    parser.add_argument("--queries-per-class", type=int, default=spec.queries_per_class)
    parser.add_argument("--image-noise", type=float, default=spec.image_noise)
    parser.add_argument("--text-noise", type=float, default=spec.text_noise)
    parser.add_argument("--query-noise", type=float, default=spec.query_noise)
    parser.add_argument("--n", type=int, default=spec.n_candidates)
    parser.add_argument("--k", type=int, default=spec.k_captions)
    parser.add_argument("--seed", type=int, default=spec.seed)
    args = parser.parse_args(argv)

    spec = SynthSpec(
        num_classes=args.classes,
        corpus_per_class=args.per_class,
        queries_per_class=args.queries_per_class,
        image_noise=args.image_noise,
        text_noise=args.text_noise,
        query_noise=args.query_noise,
        n_candidates=args.n,
        k_captions=args.k,
        seed=args.seed,
    )
    config_path = write_synthetic(spec, Path(args.out))
    print(f"wrote {spec.num_classes * spec.corpus_per_class} corpus records, "
          f"{spec.num_classes * spec.queries_per_class} queries")
    print(f"config: {config_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
