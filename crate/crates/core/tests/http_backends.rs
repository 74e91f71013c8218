use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use cineforge::audiolab::{encode_wav, AudioBuffer};
use cineforge::backends::http::{encode_cfim, HttpClient, HttpImage, HttpSpeech, HttpText};
use cineforge::backends::{
    generate_scene_image, ImageBackend, ImageRequest, SpeechBackend, SpeechConfig, TextBackend, TextParams,
};
use cineforge::{Error, FrameBuffer};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    body: serde_json::Value,
}

type Handler = dyn Fn(&str, &serde_json::Value) -> (u16, &'static str, Vec<u8>) + Send + Sync;

/// Minimal one-request-per-connection HTTP server.
fn serve(handler: Arc<Handler>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            handle(stream, &*handler, &log);
        }
    });
    (url, seen)
}

fn handle(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Seen>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if line.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let body: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    let (status, ctype, payload) = handler(&path, &body);
    log.lock().unwrap().push(Seen { path, body });
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} X\r\ncontent-type: {ctype}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        payload.len()
    )
    .unwrap();
    out.write_all(&payload).unwrap();
}

fn request() -> ImageRequest {
    ImageRequest {
        visual_prompt: "a harbor at dawn, cinematic shot".into(),
        negative_prompt: "blurry".into(),
        width: 720,
        height: 480,
        steps: 20,
        guidance_scale: 7.0,
        seed: 4242,
        scene: Some(2),
    }
}

#[test]
fn image_round_trip_and_wire_format() {
    let (url, seen) = serve(Arc::new(|_, body| {
        let w = body["width"].as_u64().unwrap() as u32;
        let h = body["height"].as_u64().unwrap() as u32;
        (200, "application/octet-stream", encode_cfim(&FrameBuffer::filled(w, h, [9, 8, 7])))
    }));
    let backend = HttpImage(HttpClient::new(&url));
    let frame = backend.generate(&request()).unwrap();
    assert_eq!(frame.dimensions(), (720, 480));
    assert_eq!(frame.pixel(5, 5), [9, 8, 7]);

    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/images");
    let body = &seen[0].body;
    assert_eq!(body["prompt"], "a harbor at dawn, cinematic shot");
    assert_eq!(body["seed"], 4242);
    assert_eq!(body["steps"], 20);
    assert!(body.get("scene").is_none());
}

#[test]
fn wrong_size_image_is_resized() {
    let (url, _) = serve(Arc::new(|_, _| {
        (200, "application/octet-stream", encode_cfim(&FrameBuffer::filled(64, 32, [200, 0, 0])))
    }));
    let frame = generate_scene_image(&HttpImage(HttpClient::new(&url)), &request()).unwrap();
    assert_eq!(frame.dimensions(), (720, 480));
    assert_eq!(frame.pixel(100, 100), [200, 0, 0]);
}

#[test]
fn server_errors_carry_scene_context() {
    let (url, _) = serve(Arc::new(|_, _| (500, "text/plain", b"out of memory".to_vec())));
    let err = HttpImage(HttpClient::new(&url)).generate(&request()).unwrap_err();
    match err {
        Error::Generation { stage, scene, .. } => assert_eq!((stage, scene), ("keyframe", Some(2))),
        other => panic!("unexpected {other:?}"),
    }

    let (url, _) = serve(Arc::new(|_, _| (200, "application/octet-stream", b"CFIMgarbage".to_vec())));
    let err = HttpImage(HttpClient::new(&url)).generate(&request()).unwrap_err();
    assert!(matches!(err, Error::Generation { stage: "keyframe", .. }), "{err}");
}

#[test]
fn speech_and_text() {
    let tone = AudioBuffer::new(22_050, 1, (0..2205).map(|i| (i % 100) as f32 / 200.0).collect()).unwrap();
    let wav = encode_wav(&tone).unwrap();
    let (url, seen) = serve(Arc::new(move |path, body| match path {
        "/v1/speech" => (200, "audio/wav", wav.clone()),
        "/v1/text" => {
            let text = format!("Scene 1: {}", body["instruction"].as_str().unwrap().len());
            (200, "application/json", serde_json::json!({ "text": text }).to_string().into_bytes())
        }
        _ => (404, "text/plain", Vec::new()),
    }));
    let client = HttpClient::new(&url);

    let audio = HttpSpeech(client.clone())
        .synthesize("hello there", &SpeechConfig::default())
        .unwrap();
    assert_eq!((audio.sample_rate(), audio.frames()), (22_050, 2205));

    let text = HttpText(client).generate("tell a story", &TextParams::default()).unwrap();
    assert_eq!(text, "Scene 1: 12");

    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].body["language"], "en");
    assert_eq!(seen[1].body["max_new_tokens"], 800);
}

#[test]
fn text_without_field_is_an_error() {
    let (url, _) = serve(Arc::new(|_, _| (200, "application/json", b"{\"story\": 1}".to_vec())));
    let err = HttpText(HttpClient::new(&url))
        .generate("x", &TextParams::default())
        .unwrap_err();
    assert!(matches!(err, Error::Generation { stage: "storyboard", .. }));
}

#[test]
fn unreachable_server() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let client = HttpClient::with_timeout(&format!("http://127.0.0.1:{port}"), std::time::Duration::from_secs(5));
    let err = HttpSpeech(client).synthesize("hi", &SpeechConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Generation { stage: "voiceover", .. }), "{err}");
}
