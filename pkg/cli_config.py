# Defaults for coop_cli.py. JSON configs and command line flags take precedence.

# 0: silent, 1: errors, 2: info, 3: debug
verbosity = 2
coloured_output = True

workers = 1
trials = 100_000
seed = 7
mode = 'analytic'

# inclusive rate grid in bits per coordination
rate_start = 0
rate_stop = 30
rate_step = 2

out_dir = '.'

# lloyd training
train_samples_per_level = 50
train_rate_cap = 12
