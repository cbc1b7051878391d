"""
Entry script: forwards its arguments to the debias-bandit command line, e.g.

    python main.py kappa --actions actions.json
    python main.py simulate --config config.json --out results/
"""

# Import the necessary libraries.
import sys
import time
from debias_bandit.cli import main as cli_main


def main():
    """
    Run one debias-bandit subcommand and report the elapsed time.
    """

    # Track the overall execution time.
    start_time = time.time()

    # Run the command.
    status = cli_main(sys.argv[1:])

    # Print total execution time.
    elapsed_time = time.time() - start_time
    print(f"Total time elapsed is {elapsed_time:.2f} seconds.", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
