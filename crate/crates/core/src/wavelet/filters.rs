//! Daubechies orthonormal filter banks.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Extremal-phase Daubechies scaling filters, normalised so that the taps sum
/// to √2 and have unit energy. `DBk` has `2k` taps and `k` vanishing moments.
const DB1: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];

#[allow(clippy::excessive_precision)]
const DB2: [f64; 4] = [
    0.48296291314453414337,
    0.83651630373780790558,
    0.22414386804201338103,
    -0.12940952255126038117,
];

#[allow(clippy::excessive_precision)]
const DB3: [f64; 6] = [
    0.332670552950082616,
    0.80689150931109257649,
    0.4598775021184915701,
    -0.1350110200102545887,
    -0.085441273882026661693,
    0.035226291885709536603,
];

#[allow(clippy::excessive_precision)]
const DB4: [f64; 8] = [
    0.23037781330889650086,
    0.71484657055291564709,
    0.63088076792985890788,
    -0.027983769416859854211,
    -0.18703481171909308408,
    0.030841381835560763627,
    0.032883011666885199735,
    -0.010597401785069032105,
];

#[allow(clippy::excessive_precision)]
const DB5: [f64; 10] = [
    0.16010239797419291448,
    0.60382926979718967054,
    0.72430852843777292773,
    0.13842814590132073151,
    -0.24229488706638203186,
    -0.032244869584638374648,
    0.077571493840045713523,
    -0.0062414902127982742742,
    -0.012580751999081999469,
    0.003335725285473771278,
];

#[allow(clippy::excessive_precision)]
const DB6: [f64; 12] = [
    0.11154074335010946362,
    0.49462389039845308568,
    0.75113390802109535068,
    0.31525035170919762909,
    -0.22626469396543982008,
    -0.12976686756726193556,
    0.097501605587323049102,
    0.027522865530305728626,
    -0.031582039317486029565,
    0.00055384220116149613925,
    0.0047772575109455106396,
    -0.0010773010853084795649,
];

#[allow(clippy::excessive_precision)]
const DB7: [f64; 14] = [
    0.07785205408500917902,
    0.39653931948191730654,
    0.72913209084623511992,
    0.46978228740519312247,
    -0.14390600392856497541,
    -0.22403618499387498264,
    0.071309219266830264751,
    0.080612609151083071913,
    -0.03802993693501441358,
    -0.016574541630666880654,
    0.012550998556099840613,
    0.00042957797292136652113,
    -0.0018016407040474909153,
    0.00035371379997452024845,
];

#[allow(clippy::excessive_precision)]
const DB8: [f64; 16] = [
    0.054415842243104009955,
    0.31287159091429997066,
    0.67563073629728980681,
    0.58535468365420671277,
    -0.015829105256349305667,
    -0.28401554296154692652,
    0.00047248457391328277036,
    0.12874742662047845886,
    -0.01736930100180754617,
    -0.044088253930794751507,
    0.013981027917398281649,
    0.0087460940474057767164,
    -0.0048703529934515743104,
    -0.0003917403733769470463,
    0.00067544940645056936637,
    -0.00011747678412476953373,
];

#[allow(clippy::excessive_precision)]
const DB9: [f64; 18] = [
    0.038077947363878346589,
    0.24383467461259035373,
    0.6048231236901111119,
    0.65728807805130053808,
    0.13319738582500757619,
    -0.29327378327917490881,
    -0.096840783222976460514,
    0.14854074933810638014,
    0.030725681479333379212,
    -0.067632829061329973676,
    0.00025094711483145195759,
    0.022361662123679097205,
    -0.0047232047577513972779,
    -0.0042815036824634298345,
    0.0018476468830562264766,
    0.00023038576352319596721,
    -0.00025196318894271013697,
    0.000039347320316271599481,
];

/// A member of the Daubechies family, `db1` (Haar) through `db9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Wavelet(u8);

impl Wavelet {
    pub const HAAR: Wavelet = Wavelet(1);
    pub const DB9: Wavelet = Wavelet(9);

    pub fn daubechies(order: u8) -> Result<Self> {
        if (1..=9).contains(&order) {
            Ok(Wavelet(order))
        } else {
            Err(Error::UnknownWavelet(format!("db{order}")))
        }
    }

    /// Number of vanishing moments of the wavelet.
    pub fn order(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Wavelet> {
        (1..=9).map(Wavelet)
    }

    fn scaling_filter(self) -> &'static [f64] {
        match self.0 {
            1 => &DB1,
            2 => &DB2,
            3 => &DB3,
            4 => &DB4,
            5 => &DB5,
            6 => &DB6,
            7 => &DB7,
            8 => &DB8,
            9 => &DB9,
            _ => unreachable!("Wavelet order validated at construction"),
        }
    }
}

impl fmt::Display for Wavelet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "db{}", self.0)
    }
}

impl FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.trim().to_ascii_lowercase();
        let order = match name.as_str() {
            "haar" => Some(1),
            _ => name.strip_prefix("db").and_then(|k| k.parse::<u8>().ok()),
        };
        match order {
            Some(k @ 1..=9) => Ok(Wavelet(k)),
            _ => Err(Error::UnknownWavelet(s.to_string())),
        }
    }
}

/// Orthonormal analysis/synthesis filter pair.
///
/// The highpass filter is the quadrature mirror of the lowpass filter,
/// `highpass[k] = (-1)^k lowpass[len - 1 - k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    wavelet: Wavelet,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl FilterPair {
    pub fn new(wavelet: Wavelet) -> Self {
        let lowpass = wavelet.scaling_filter().to_vec();
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[len - 1 - k]
            })
            .collect();
        FilterPair {
            wavelet,
            lowpass,
            highpass,
        }
    }

    pub fn wavelet(&self) -> Wavelet {
        self.wavelet
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    /// Tap count, `2K` for `dbK`.
    pub fn len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowpass.is_empty()
    }
}

/// Looks up a filter pair by name (`db1` … `db9`, or `haar`).
pub fn make_filter(name: &str) -> Result<FilterPair> {
    Ok(FilterPair::new(name.parse()?))
}
