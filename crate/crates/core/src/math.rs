//! Float helpers: the platform implementations with the `std` feature,
//! `libm` without it.

macro_rules! unary {
    ($($name:ident => $std:ident, $libm:ident;)*) => {$(
        #[inline]
        pub fn $name(x: f64) -> f64 {
            #[cfg(feature = "std")]
            {
                x.$std()
            }
            #[cfg(not(feature = "std"))]
            {
                libm::$libm(x)
            }
        }
    )*};
}

unary! {
    sqrt => sqrt, sqrt;
    exp => exp, exp;
    ln => ln, log;
    asin => asin, asin;
    floor => floor, floor;
    sin => sin, sin;
    cos => cos, cos;
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        y.atan2(x)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::atan2(y, x)
    }
}

#[inline]
pub fn powf(x: f64, p: f64) -> f64 {
    // Exact for the common p = 2 and p = 1 cases.
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x
    } else {
        #[cfg(feature = "std")]
        {
            x.powf(p)
        }
        #[cfg(not(feature = "std"))]
        {
            libm::pow(x, p)
        }
    }
}

#[inline]
pub fn norm3(v: [f64; 3]) -> f64 {
    sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}
