"""CIR on vs off over several seeds with a paired t-test on validation image NMSE%."""
import argparse

from ddcisenet.experiments import DeskConfig, cir_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[17, 18, 19, 20, 21])
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args()
    res = cir_ablation(tuple(args.seeds), DeskConfig(steps=args.steps), log=print)
    print(res.summary())


if __name__ == "__main__":
    main()
