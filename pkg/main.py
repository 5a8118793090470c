import sys
import os
import logging
from pathlib import Path

# Add the src directory to the Python path
src_path = Path(__file__).resolve().parent / 'src'
sys.path.append(str(src_path))

from oscilla import config as settings
from oscilla.cell import richardson_q0, solve_cell
from oscilla.convergence import SweepConfig, run_sweep
from oscilla.correctors import FIRST, H1, norm_rescaled, truncation
from oscilla.db import CacheManager
from oscilla.exceptions import OscillaError
from oscilla.homogenized import TrigPoly, residual_check, solve_homogenized
from oscilla.profile import EpsilonValue, make_profile
from oscilla.strip import StripMeshParams, apriori_check, energy_check, solve_thin

# Set up logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format=settings.LOG_FORMAT
)
logger = logging.getLogger(__name__)


def main():
    """
    Main entry point for the oscilla demonstration.

    Performs the complete workflow on the reference profile g = 1 + cos(y)/2:
    1. Validate the profile
    2. Solve the cell problems and compute q0
    3. Solve the homogenized equation
    4. Solve the strip problem for one eps
    5. Compare it with the first-order corrected solution
    6. Run the eps sweep and write the reports
    7. Store the report in the cache when one is configured
    """
    output_dir = 'results'

    # Step 1: Validate the profile
    logger.info("Step 1: Validating the boundary profile...")
    try:
        profile = make_profile(1.0, [(1, 0.5, 0.0)])
    except OscillaError as e:
        logger.error(f"Invalid profile: {e}")
        return 2
    logger.info(f"Profile period {profile.period:.6f}, g1={profile.g1:.6f}, g_min={profile.g_min:.6f}")

    # Step 2: Cell problems
    logger.info("\nStep 2: Solving the cell problems...")
    cell = solve_cell(profile, 128, 32, with_theta=True)
    logger.info(f"q0 = {cell.q0:.12f} (energy form {cell.q0_energy:.12f})")
    extrapolated, levels, order = richardson_q0(profile, [(32, 8), (64, 16), (128, 32)])
    logger.info(f"Richardson q0 = {extrapolated:.12f} from {len(levels)} levels, observed order {order:.2f}")

    # Step 3: Homogenized equation
    logger.info("\nStep 3: Solving the homogenized equation...")
    forcing = TrigPoly.cos(1)
    w0 = solve_homogenized(cell.q0, forcing)
    logger.info(f"w0 = {w0.modes[0][1]:.12f} cos(phi), residual {residual_check(cell.q0, forcing, w0):.3e}")

    # Step 4: Strip problem
    logger.info("\nStep 4: Solving the strip problem for eps = 1/8...")
    eps = EpsilonValue(8)
    params = StripMeshParams(32, 16)
    sol = solve_thin(profile, eps, forcing, params)
    w_norm, f_norm = apriori_check(sol)
    logger.info(f"{sol.dofs} dofs, energy check {energy_check(sol):.3e}, "
                f"|||w|||={w_norm:.6f} <= |||f|||={f_norm:.6f}")

    # Step 5: Corrector comparison
    logger.info("\nStep 5: Comparing with the first-order corrected solution...")
    W1 = truncation(FIRST, w0, cell, eps, sol.mesh)
    e1 = norm_rescaled(sol.field.sample() - W1.sample, H1, sol.mesh, eps)
    logger.info(f"|||w - W1|||_H1 = {e1:.6e}")

    # Step 6: Sweep
    logger.info("\nStep 6: Running the eps sweep...")
    config = SweepConfig(profile, forcing, ladder=tuple(EpsilonValue(m) for m in (4, 8, 16, 32)),
                         cell_ny=128, cell_nz=32, strip=params, jobs=os.cpu_count() or 1)
    report = run_sweep(config, cell=cell)
    report.write_csv(os.path.join(output_dir, 'convergence.csv'))
    report.write_json(os.path.join(output_dir, 'convergence.json'))
    report.write_gnuplot(os.path.join(output_dir, 'convergence.dat'),
                         os.path.join(output_dir, 'convergence.plt'))
    for name, fit in report.fits.items():
        if fit is not None:
            logger.info(f"Slope {name}: {fit.slope:.4f}{'' if fit.reliable else ' (mesh-limited)'}")

    # Step 7: Cache
    logger.info("\nStep 7: Caching the report...")
    cache = CacheManager.from_environment()
    if cache is None:
        logger.info("OSCILLA_CACHE_DIR is not set; skipping the cache.")
    else:
        cache.store_report(config.config_hash(), report.to_dict())
        logger.info(f"Report stored under {config.config_hash()[:12]}")

    logger.info("\nProcess completed successfully!")
    return 4 if report.failed_rows else 0


if __name__ == "__main__":
    sys.exit(main())
