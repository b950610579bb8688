version = (0, 4, 0)
# progress report
shaping = 'Shaping TX {} at rates {}:'
converged = 'converged after {} iterations'
not_converged = 'iteration cap reached ({}), keeping best iterate'
clamped = 'low-rate clamp active'
step_rejected = 'shaping step rejected: {}'
cond_cap = 'condition number cap {:.0e} reached, keeping best iterate'
gradient_failed = 'gradient evaluation failed ({}), keeping best iterate'
approx_fallback = 'approximate objective out of range, using exact objective'
ill_cond = 'Ill-conditioned system, condition number {:.3e}'
regularized = 'Q_{} is singular, regularised with {:.3e} I'
training = 'Training codebook: {} levels, {} samples'
lloyd_iter = 'lloyd iteration {}: distortion {:.6g}'
empty_cells = '{} empty cells reseeded'
few_samples = 'Only {} samples for an error covariance estimate'
zf_singular = 'TX {}: singular channel estimate in {} trials, stream muted'
trained_fallback = 'rate {} above training cap {}, analytic model used'

# sweeps
sweep_point = 'rate {:>3} {:<9} tx {}'
sweep_done = 'Sweep finished: {} records in {:.1f}s'
wz_skipped = 'wz_bound has no sum rate, skipped'

# allocation
candidates = 'Evaluating {} candidate splits of {} bits'
alloc_move = 'move 1 bit {} -> {}: {:.6g}'
winner = 'Best split:'

# errors
bad_cov = '{} is not a valid covariance matrix: {}'
not_hermitian = 'not Hermitian'
not_psd = 'not positive semidefinite'
bad_geometry = 'RX {} is {:.4f} km from TX {}, below d_0 = {} km'
qq_not_below = 'quantization error covariance not below the source covariance'
singular_b = 'shaping matrix is singular'
too_few_samples = '{} training samples, need at least {}'
rate_cap = 'rate {} above the training cap of {} bits'
approx_range = 'information matrix not positive definite at this rate'
too_many = '{} candidate splits exceed the limit of {}'

# CLI
start = 'Starting'
written = 'Written:'
config_error = 'Config error:'
numerical_error = 'Numerical failure:'
