use bendaid::haptic::{HapticMode, ParamKey};
use bendaid::protocol::{
    encode_command, encode_frame, encode_telemetry, parse_frame, quantize, CommandFrame, Frame,
    StreamDecoder, TelemetryFrame, MAX_LINE,
};
use proptest::prelude::*;

fn telemetry() -> impl Strategy<Value = TelemetryFrame> {
    (
        any::<u32>(),
        any::<u32>(),
        -1e6..1e6f64,
        -1e5..1e5f64,
        -1.0..=1.0f64,
        prop::sample::select(HapticMode::ALL.to_vec()),
    )
        .prop_map(|(seq, t, a, v, tq, mode)| TelemetryFrame {
            seq: u64::from(seq),
            t_ms: u64::from(t),
            angle_deg: a,
            velocity_dps: v,
            torque: tq,
            mode,
        })
}

fn command() -> impl Strategy<Value = CommandFrame> {
    let keys: Vec<ParamKey> = ParamKey::ALL.to_vec();
    prop_oneof![
        prop::sample::select(HapticMode::ALL.to_vec()).prop_map(CommandFrame::Mode),
        Just(CommandFrame::Zero),
        (prop::sample::select(keys), -1e9..1e9f64)
            .prop_map(|(key, value)| CommandFrame::Param { key, value }),
        any::<u64>().prop_map(|nonce| CommandFrame::Ping { nonce }),
    ]
}

fn frame() -> impl Strategy<Value = Frame> {
    prop_oneof![telemetry().prop_map(Frame::Telemetry), command().prop_map(Frame::Command)]
}

fn quantized(f: &Frame) -> Frame {
    match f {
        Frame::Telemetry(t) => Frame::Telemetry(TelemetryFrame {
            angle_deg: quantize(t.angle_deg),
            velocity_dps: quantize(t.velocity_dps),
            torque: quantize(t.torque),
            ..*t
        }),
        c => c.clone(),
    }
}

proptest! {
    #[test]
    fn frames_roundtrip_up_to_wire_precision(f in frame()) {
        let bytes = encode_frame(&f);
        prop_assert!(bytes.len() <= MAX_LINE);
        prop_assert_eq!(*bytes.last().unwrap(), b'\n');
        let line = std::str::from_utf8(&bytes).unwrap();
        let back = parse_frame(line).unwrap();
        prop_assert_eq!(&back, &quantized(&f));
        // Re-encoding a decoded frame is byte-identical.
        prop_assert_eq!(encode_frame(&back), bytes);
    }

    #[test]
    fn decoding_is_independent_of_chunking(
        frames in prop::collection::vec(frame(), 1..40),
        cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..30),
    ) {
        let stream: Vec<u8> = frames.iter().flat_map(encode_frame).collect();
        let mut whole = StreamDecoder::new();
        let expected = whole.decode(&stream);

        let mut points: Vec<usize> = cuts.iter().map(|i| i.index(stream.len() + 1)).collect();
        points.sort_unstable();
        let mut chunked = StreamDecoder::new();
        let mut got = Vec::new();
        let mut prev = 0;
        for p in points.into_iter().chain([stream.len()]) {
            chunked.decode_into(&stream[prev..p], &mut got);
            prev = p;
        }
        prop_assert_eq!(&got, &expected);
        prop_assert_eq!(got.len(), frames.len());
        prop_assert_eq!(chunked.stats(), whole.stats());
    }

    #[test]
    fn garbage_never_panics_and_buffer_stays_bounded(
        chunks in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..300), 0..20),
    ) {
        let mut d = StreamDecoder::new();
        for c in &chunks {
            let frames = d.decode(c);
            prop_assert!(d.buffered() < MAX_LINE);
            prop_assert!(frames.len() as u64 <= d.stats().frames_ok);
        }
    }

    #[test]
    fn decoder_resyncs_after_garbage(
        junk in prop::collection::vec(any::<u8>().prop_filter("no newline", |b| *b != b'\n'), 0..400),
        f in frame(),
    ) {
        let mut d = StreamDecoder::new();
        let mut bytes = junk;
        bytes.push(b'\n');
        bytes.extend(encode_frame(&f));
        let out = d.decode(&bytes);
        prop_assert_eq!(out.last(), Some(&quantized(&f)));
        prop_assert!(d.stats().frames_dropped <= 1);
    }
}

#[test]
fn overlong_line_counts_as_one_drop() {
    let mut d = StreamDecoder::new();
    let mut bytes = vec![b'T'; 1000];
    bytes.push(b'\n');
    bytes.extend(encode_command(&CommandFrame::Zero));
    for c in bytes.chunks(7) {
        d.decode(c);
    }
    assert_eq!(d.stats().frames_dropped, 1);
    assert_eq!(d.stats().frames_ok, 1);
}

#[test]
fn exact_telemetry_line() {
    let s = TelemetryFrame {
        seq: 1,
        t_ms: 1,
        angle_deg: 30.0,
        velocity_dps: -0.00004,
        torque: -0.333333,
        mode: HapticMode::Spring,
    };
    let line = String::from_utf8(encode_telemetry(&s)).unwrap();
    assert_eq!(line, "TT,1,1,30.0000,-0.0000,-0.3333,SPRING\n");
}
