//! Bundled reference parameter sets for a fixed-frequency three-transmon
//! device, used by tests, examples, and the CLI defaults.

use crate::dynamics::CoherenceSpec;
use crate::estimation::AssignmentMatrix;
use crate::hilbert::{DeviceModel, TransmonSpec};

/// Reference device: two data transmons and a higher-frequency coupler.
pub fn table_device(levels: usize) -> DeviceModel {
    DeviceModel::new(
        [
            TransmonSpec::new(4464.0, -225.0, levels).unwrap(),
            TransmonSpec::new(4985.0, -230.0, levels).unwrap(),
            TransmonSpec::new(5746.0, -314.0, levels).unwrap(),
        ],
        3.0,
        63.0,
        31.0,
    )
    .unwrap()
}

/// Reference coherence times (us) and thermal populations.
pub fn table_coherence() -> [CoherenceSpec; 3] {
    [
        CoherenceSpec::new(168.0, None, 90.0, None, 0.03),
        CoherenceSpec::new(80.0, None, 85.0, None, 0.16),
        CoherenceSpec::new(42.0, Some(32.0), 64.0, Some(26.0), 0.13),
    ]
}

/// Reference readout assignment matrices (target-state rows g/e/f).
pub fn assignment_qa() -> AssignmentMatrix {
    AssignmentMatrix::from_target_rows([
        [0.9995, 0.0003, 0.0002],
        [0.023, 0.968, 0.009],
        [0.023, 0.031, 0.946],
    ])
    .unwrap()
}

pub fn assignment_qb() -> AssignmentMatrix {
    AssignmentMatrix::from_target_rows([
        [0.909, 0.0074, 0.0836],
        [0.042, 0.940, 0.018],
        [0.093, 0.028, 0.879],
    ])
    .unwrap()
}

pub fn assignment_qc() -> AssignmentMatrix {
    AssignmentMatrix::from_target_rows([
        [0.979, 0.021, 0.0],
        [0.057, 0.919, 0.024],
        [0.049, 0.102, 0.849],
    ])
    .unwrap()
}

/// Coupler assignment under the fast mid-circuit readout condition.
pub fn assignment_qc_mcm() -> AssignmentMatrix {
    AssignmentMatrix::from_target_rows([
        [0.979, 0.0196, 0.0014],
        [0.026, 0.848, 0.126],
        [0.017, 0.142, 0.841],
    ])
    .unwrap()
}

/// ZZ interaction strengths (cyclic MHz) between the coupler and each data
/// transmon, as measured by echo-amplified Ramsey on the reference device.
pub const XI_ZZ_AC_MHZ: f64 = 1.447;
pub const XI_ZZ_BC_MHZ: f64 = 1.137;
