"""District-heating secondary-network control laboratory.

Subpackages: ``weather`` (season synthesis), ``thermal`` (ground-truth RC
building simulator), ``surrogate`` (recurrent system identification),
``mdp`` (episode mechanics), ``control`` (water curve / PSO / PID),
``dqn`` (value-based agents) and ``harness`` (experiments and reporting).
"""

__version__ = "0.1.0"
