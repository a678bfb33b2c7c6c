"""Train the default desk-scale cascade and compare validation NMSE% against zero-filling."""
import argparse

from ddcisenet.experiments import DeskConfig, desk_trend


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=17)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--cir", choices=("on", "off"), default="on")
    args = ap.parse_args()
    r = desk_trend(args.seed, args.cir == "on", DeskConfig(steps=args.steps, lr=args.lr))
    print(f"seed={r.seed} cir={args.cir} steps={args.steps} time={r.seconds:.1f}s")
    print(f"loss first={r.first_loss:.4e} final(mean last epoch)={r.final_loss:.4e}")
    print(f"val image NMSE%: zero-filling={r.zf_nmse:.3f} model={r.model_nmse:.3f} ratio={r.ratio:.3f}")


if __name__ == "__main__":
    main()
