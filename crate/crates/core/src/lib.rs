pub mod analysis;
pub mod bp;
pub mod experiment;
pub mod measure;
pub mod seed;
pub mod sumverify;
pub mod weightset;
pub mod wsn;

pub use bp::{decode_bp, BpConfig, BpError, PosteriorResult};
pub use measure::{BinarySignal, MeasureError, MeasurementGraph, MeasurementVector};
pub use sumverify::{decode_sv, DecodeStatus, SvDecodeResult, SvError};
pub use weightset::{WeightSet, WeightSetError};
