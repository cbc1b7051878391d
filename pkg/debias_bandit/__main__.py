# Import the necessary libraries.
import sys
from debias_bandit.cli import main

sys.exit(main())
