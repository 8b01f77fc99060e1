//! Face fluxes of the finite-volume scheme.

/// Below this jump in cell averages the Roe speed is treated as undefined and
/// the centered average of the two cell fluxes is used instead.
pub const ROE_DEGENERATE_JUMP: f64 = 1e-14;

/// Roe upwind rule for one face between a left and a right cell.
///
/// Returns the left flux when the Roe speed `(f_right - f_left) / (pi_right - pi_left)`
/// is negative, the right flux otherwise.
pub fn roe_face_flux(f_left: f64, f_right: f64, pi_left: f64, pi_right: f64) -> f64 {
    let jump = pi_right - pi_left;
    if jump.abs() < ROE_DEGENERATE_JUMP {
        return 0.5 * (f_left + f_right);
    }
    let speed = (f_right - f_left) / jump;
    if speed < 0.0 {
        f_left
    } else {
        f_right
    }
}

/// The clipped ramp `H(x) = clamp(x, 0, 1)` that switches the noise off in
/// empty cells.
pub fn ramp(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Modified arithmetic mean of two neighboring cells used by the stochastic
/// flux; `cell_particles` is `h^n N`, the expected particle count per unit
/// density in one cell.
pub fn face_average(pi_left: f64, pi_right: f64, cell_particles: f64) -> f64 {
    0.5 * (pi_left + pi_right) * ramp(cell_particles * pi_left) * ramp(cell_particles * pi_right)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_values() {
        assert_eq!(ramp(-0.5), 0.0);
        assert_eq!(ramp(0.5), 0.5);
        assert_eq!(ramp(2.0), 1.0);
        assert_eq!(ramp(0.0), 0.0);
    }

    #[test]
    fn roe_case_split() {
        // A = (2 - 1) / (2 - 1) = 1 >= 0 picks the right cell
        assert_eq!(roe_face_flux(1.0, 2.0, 1.0, 2.0), 2.0);
        // A = (2 - 1) / (1 - 2) < 0 picks the left cell
        assert_eq!(roe_face_flux(1.0, 2.0, 2.0, 1.0), 1.0);
        // A = 0 counts as non-negative
        assert_eq!(roe_face_flux(3.0, 3.0, 1.0, 2.0), 3.0);
    }

    #[test]
    fn roe_degenerate_denominator_averages() {
        assert_eq!(roe_face_flux(1.0, 2.0, 1.5, 1.5), 1.5);
        assert_eq!(roe_face_flux(-1.0, 3.0, 0.2, 0.2 + 1e-16), 1.0);
    }

    #[test]
    fn empty_cell_silences_its_faces() {
        assert_eq!(face_average(0.0, 1.0, 15.6), 0.0);
        assert_eq!(face_average(1.0, 0.0, 15.6), 0.0);
        assert_eq!(face_average(1.0, 1.0, 15.6), 1.0);
    }
}
