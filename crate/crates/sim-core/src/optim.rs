//! Derivative-free 2-D minimization used by the parameter-refinement
//! searches.

/// Termination settings for [`nelder_mead_2d`].
#[derive(Clone, Copy, Debug)]
pub struct NelderMeadOptions {
    /// Max absolute coordinate spread of the simplex at termination.
    pub xatol: f64,
    /// Max absolute objective spread at termination.
    pub fatol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            xatol: 1e-4,
            fatol: 1e-4,
            max_iter: 400,
        }
    }
}

/// Nelder-Mead simplex minimization in two dimensions with the standard
/// coefficients (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
/// Terminates when both the coordinate spread and the objective spread fall
/// under their tolerances, or after `max_iter` iterations. Returns the best
/// vertex and its objective value.
pub fn nelder_mead_2d(
    mut f: impl FnMut([f64; 2]) -> f64,
    initial_simplex: [[f64; 2]; 3],
    opts: &NelderMeadOptions,
) -> ([f64; 2], f64) {
    let mut sim = initial_simplex;
    let mut fv = [f(sim[0]), f(sim[1]), f(sim[2])];
    sort_simplex(&mut sim, &mut fv);

    for _ in 0..opts.max_iter {
        let x_spread = (0..2)
            .map(|d| {
                (sim[1][d] - sim[0][d])
                    .abs()
                    .max((sim[2][d] - sim[0][d]).abs())
            })
            .fold(0.0f64, f64::max);
        let f_spread = (fv[1] - fv[0]).abs().max((fv[2] - fv[0]).abs());
        if x_spread <= opts.xatol && f_spread <= opts.fatol {
            break;
        }

        let centroid = [
            0.5 * (sim[0][0] + sim[1][0]),
            0.5 * (sim[0][1] + sim[1][1]),
        ];
        let reflect = [
            2.0 * centroid[0] - sim[2][0],
            2.0 * centroid[1] - sim[2][1],
        ];
        let fr = f(reflect);

        if fr < fv[0] {
            let expand = [
                3.0 * centroid[0] - 2.0 * sim[2][0],
                3.0 * centroid[1] - 2.0 * sim[2][1],
            ];
            let fe = f(expand);
            if fe < fr {
                sim[2] = expand;
                fv[2] = fe;
            } else {
                sim[2] = reflect;
                fv[2] = fr;
            }
        } else if fr < fv[1] {
            sim[2] = reflect;
            fv[2] = fr;
        } else {
            let shrink_needed = if fr < fv[2] {
                let outside = [
                    1.5 * centroid[0] - 0.5 * sim[2][0],
                    1.5 * centroid[1] - 0.5 * sim[2][1],
                ];
                let fo = f(outside);
                if fo <= fr {
                    sim[2] = outside;
                    fv[2] = fo;
                    false
                } else {
                    true
                }
            } else {
                let inside = [
                    0.5 * (centroid[0] + sim[2][0]),
                    0.5 * (centroid[1] + sim[2][1]),
                ];
                let fi = f(inside);
                if fi < fv[2] {
                    sim[2] = inside;
                    fv[2] = fi;
                    false
                } else {
                    true
                }
            };
            if shrink_needed {
                for j in 1..3 {
                    sim[j] = [
                        0.5 * (sim[0][0] + sim[j][0]),
                        0.5 * (sim[0][1] + sim[j][1]),
                    ];
                    fv[j] = f(sim[j]);
                }
            }
        }
        sort_simplex(&mut sim, &mut fv);
    }
    (sim[0], fv[0])
}

fn sort_simplex(sim: &mut [[f64; 2]; 3], fv: &mut [f64; 3]) {
    // insertion sort on 3 elements, stable
    for i in 1..3 {
        let mut j = i;
        while j > 0 && fv[j] < fv[j - 1] {
            fv.swap(j, j - 1);
            sim.swap(j, j - 1);
            j -= 1;
        }
    }
}
