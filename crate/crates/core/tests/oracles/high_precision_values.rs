// Generated by high_precision.py; do not edit.
pub const ENTANGLED_X: &[f64] = &[0.37, -0.52];
pub const ENTANGLED_T: &[f64] = &[0.8, -0.3];
pub const ENTANGLED_PSI: (f64, f64) = (7.380414461314093213301531e-3, 0.03362303845890925582592487);
pub const ENTANGLED_WEIGHTS: &[f64] = &[0.6011887520875870993811660, 0.3988112479124129006188340];
pub const GHZ_X: &[f64] = &[0.2, -0.7, 1.1];
pub const GHZ_T: &[f64] = &[1.3, 0.4, -0.2];
pub const GHZ_PSI: (f64, f64) = (0.03909071687750782070927947, -0.08861420594997911185067183);
pub const GHZ_WEIGHTS: &[f64] = &[0.2111025408845827654166193, 0.7888974591154172345833807];
pub const COHERENT_X: &[f64] = &[1.3];
pub const COHERENT_T: &[f64] = &[2.7];
pub const COHERENT_PSI: (f64, f64) = (-0.03334886513413229959035902, -0.05718075607816373736464249);
pub const COHERENT_WEIGHTS: &[f64] = &[1.000000000000000000000000];
pub const SPLIT_X: &[f64] = &[3.1, -2.4];
pub const SPLIT_T: &[f64] = &[2.5, 3.5];
pub const SPLIT_PSI: (f64, f64) = (-0.1369674834168478183105220, -0.05066212443031575489112142);
pub const SPLIT_WEIGHTS: &[f64] = &[0.9999999999987078093860751, 1.292190613924903858711338e-12];
