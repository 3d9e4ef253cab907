//! Multi-device room-acoustics simulation.
//!
//! Room impulse responses come from the image-source method with
//! nearest-sample image delays; walls share a uniform reflection coefficient
//! derived from a target T60 via Sabine's formula when the scene sampler is
//! used. Channels are rendered as the sum of convolved sources, noise mixed at
//! a target SNR, and a per-device clock drift.

mod mix;
mod render;
mod room;
mod sampler;
mod speech;

pub use mix::{apply_clock_drift, mix_at_snr, pink_noise, white_noise};
pub use render::{
    render_scene, DeviceRecording, DeviceSpec, RenderedScene, SceneConfig, SceneGroundTruth, SignalSpec,
    SourceKind, SourceSpec, SCENE_SCHEMA_VERSION,
};
pub use room::{image_method_rir, image_sources, t60_to_reflection, ImageSource, Point, RirRequest, RoomSpec};
pub use sampler::{SceneSampler, KINECT_MIC_OFFSETS};
pub use speech::{synth_speech_surrogate, SpeechParams};
