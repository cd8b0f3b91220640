/// Floating-point scalar for the numeric kernels: f32 or f64.
pub trait Real: num_traits::Float + num_traits::FromPrimitive + num_traits::NumCast {}
impl Real for f32 {}
impl Real for f64 {}
