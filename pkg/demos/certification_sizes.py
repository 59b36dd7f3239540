"""Print the scenario counts that back the probabilistic certificate.

required_scenarios(eta, delta, n_trials) is the number of random scenarios
that guarantees, with confidence 1 - delta, that every one of n_trials
candidate settings surviving certification violates its criteria with
probability below eta, while tolerating one observed failure.  The count
grows only logarithmically with the number of candidates and with the
confidence, but linearly with 1/eta.
"""

from mpc_autotune.tuning import required_scenarios


def main() -> None:
    etas = (0.1, 0.05, 0.01, 0.001)
    print("scenarios needed at confidence 1 - 1e-3, one allowed failure:")
    print("n_trials" + "".join(f"  eta={eta:<6g}" for eta in etas))
    for n_trials in (1, 5, 10, 100, 1000):
        row = f"{n_trials:8d}"
        for eta in etas:
            row += f"  {required_scenarios(eta, 1.0e-3, n_trials):10d}"
        print(row)

    print()
    print("a desk-scale run with nb=5 batches of nsb=4 leaves (nb-1)*nsb = 16")
    print("scenarios beyond the freezing batch; compare against the table to see")
    print("what violation level such a budget can actually certify.")


if __name__ == "__main__":
    main()
