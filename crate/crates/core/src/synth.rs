//! A small synthetic corpus: 40 memes under the fhm schema and 20 videos
//! under the mhc schema, plus scripted human answers. The stub model flags
//! any text containing a lexicon term.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::Serialize;

use crate::ingest::write_lines;
use crate::labels::BinaryLabel;

pub const SYNTH_LEXICON: [&str; 3] = ["zorp", "blick", "kravn"];
pub const N_MEMES: usize = 40;
pub const N_VIDEOS: usize = 20;

/// Memes labelled hateful.
fn meme_hateful(i: usize) -> bool {
    i < 16
}

/// Memes whose text carries a lexicon term.
fn meme_has_term(i: usize) -> bool {
    (meme_hateful(i) && ![3, 7, 11].contains(&i)) || [20, 25, 30, 35, 39].contains(&i)
}

/// Queued memes where the scripted annotator sides with the model.
const HUMAN_SIDES_WITH_MODEL: [usize; 3] = [3, 20, 30];

const PLAIN: [&str; 8] = [
    "when the coffee finally kicks in",
    "me explaining my weekend plans to the cat",
    "nobody: my printer on a monday",
    "that feeling when the bus is early",
    "trying to fold a fitted sheet",
    "my plants after one day of rain",
    "the group chat at three in the morning",
    "when you find fries at the bottom of the bag",
];

fn meme_text(i: usize) -> String {
    let base = PLAIN[i % PLAIN.len()];
    if meme_has_term(i) {
        let term = SYNTH_LEXICON[i % SYNTH_LEXICON.len()];
        format!("{base} and the {term} crowd shows up")
    } else {
        base.to_string()
    }
}

pub fn meme_id(i: usize) -> String {
    format!("m{i:03}")
}

pub fn video_id(i: usize) -> String {
    format!("v{i:03}")
}

fn video_label(i: usize) -> &'static str {
    ["hateful", "offensive", "normal", "normal"][i % 4]
}

fn video_frames(i: usize) -> u32 {
    10 + (7 * i as u32) % 23
}

fn video_transcript(i: usize) -> String {
    let base = PLAIN[(i + 3) % PLAIN.len()];
    if video_label(i) == "normal" {
        format!("today we talk about {base}")
    } else {
        let term = SYNTH_LEXICON[i % SYNTH_LEXICON.len()];
        format!("today we talk about {base} with the {term} gang")
    }
}

fn tile(w: u32, h: u32, a: usize, b: usize) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let r = ((a * 53 + x as usize * 5) % 256) as u8;
        let g = ((a * 97 + b * 31 + y as usize * 7) % 256) as u8;
        let bl = ((b * 71 + (x + y) as usize * 3) % 256) as u8;
        Rgb([r, g, bl])
    })
}

#[derive(Serialize)]
struct MemeLine {
    id: String,
    image: String,
    text: String,
    label: String,
}

#[derive(Serialize)]
struct VideoLine {
    id: String,
    title: String,
    transcript: String,
    frames_dir: String,
    frame_count: u32,
    duration_s: f64,
    label: String,
}

/// One scripted human answer.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ScriptedAnswer {
    pub item_id: String,
    pub label: BinaryLabel,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub root: PathBuf,
    pub memes: PathBuf,
    pub videos: PathBuf,
    pub answers: PathBuf,
    pub config: PathBuf,
}

/// Default run configuration for the corpus, paths relative to its root.
pub const SYNTH_CONFIG: &str = r#"task = "mhc"
train_fraction = 0.8
shots = "auto"
n_values = [0, 2, 4, 6, 8]
profile = "VIDEO_MODEL"
strategies = ["NO_FT", "VID_FT", "OM_FT", "RM_FT", "VID_RM_FT"]

[memes]
manifest = "memes.mft"
schema = "fhm"
mapping = "fhm-mhc"

[videos]
manifest = "videos.mft"
schema = "mhc"
mapping = "mhc-mhc"

[seeds]
split = 11
sample = 12
demo = 13
aug = 14
frame = 15
shuffle = 16

[model]
backend = "stub"
lexicon = ["zorp", "blick", "kravn"]
"#;

/// Write the corpus under `root`. Output depends on nothing but the code.
pub fn write_corpus(root: &Path) -> std::io::Result<SynthCorpus> {
    fs::create_dir_all(root.join("memes"))?;
    let mut memes = Vec::new();
    let mut answers = Vec::new();
    for i in 0..N_MEMES {
        let id = meme_id(i);
        let rel = format!("memes/{id}.png");
        tile(48, 40, i, 0)
            .save(root.join(&rel))
            .map_err(std::io::Error::other)?;
        let hateful = meme_hateful(i);
        memes.push(MemeLine {
            id: id.clone(),
            image: rel,
            text: meme_text(i),
            label: if hateful { "hateful" } else { "non-hateful" }.into(),
        });
        if hateful != meme_has_term(i) {
            let original = if hateful { BinaryLabel::Positive } else { BinaryLabel::Negative };
            let label = if HUMAN_SIDES_WITH_MODEL.contains(&i) { original.flip() } else { original };
            answers.push(ScriptedAnswer {
                item_id: id,
                label,
                elapsed_s: 20.0 + i as f64,
            });
        }
    }

    let mut videos = Vec::new();
    for i in 0..N_VIDEOS {
        let id = video_id(i);
        let dir = format!("videos/{id}");
        fs::create_dir_all(root.join(&dir))?;
        let frames = video_frames(i);
        for f in 0..frames {
            tile(24, 24, 100 + i, f as usize)
                .save(root.join(&dir).join(format!("{f:05}.png")))
                .map_err(std::io::Error::other)?;
        }
        videos.push(VideoLine {
            id,
            title: format!("clip {i}"),
            transcript: video_transcript(i),
            frames_dir: dir,
            frame_count: frames,
            duration_s: frames as f64 * 2.0,
            label: video_label(i).into(),
        });
    }

    let corpus = SynthCorpus {
        root: root.to_path_buf(),
        memes: root.join("memes.mft"),
        videos: root.join("videos.mft"),
        answers: root.join("answers.jsonl"),
        config: root.join("run.toml"),
    };
    let to_io = |e: crate::ingest::IngestError| std::io::Error::other(e.to_string());
    write_lines(&corpus.memes, &memes).map_err(to_io)?;
    write_lines(&corpus.videos, &videos).map_err(to_io)?;
    write_lines(&corpus.answers, &answers).map_err(to_io)?;
    fs::write(&corpus.config, SYNTH_CONFIG)?;
    Ok(corpus)
}
