//! On-disk binary formats for features and annotations.
//!
//! Feature file: magic `VSUMFEAT`, little-endian u32 frame count T, u32
//! feature dim D, u32 reserved (zero), u32 CRC32 of the payload, then
//! T*D little-endian f64 row-major.
//!
//! Annotation file: magic `VSUMANNO`, u32 annotator count U, u32 T, then
//! U*T f64 per-annotator frame scores, T f64 mean scores, and U*T bytes of
//! 0/1 user key-shot flags.
//!
//! Both formats are language-neutral and seekable; loads validate shape,
//! checksum, and finiteness and never return partial data.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::UserAnnotations;
use crate::tensor::Matrix;

pub const FEATURE_MAGIC: &[u8; 8] = b"VSUMFEAT";
pub const ANNOTATION_MAGIC: &[u8; 8] = b"VSUMANNO";

/// Header bytes before the feature payload.
pub const FEATURE_HEADER_LEN: u64 = 24;
/// Header bytes before the annotation payload.
pub const ANNOTATION_HEADER_LEN: u64 = 16;

fn load_err(video_id: &str, offset: u64, details: impl Into<String>) -> Error {
    Error::Load {
        video_id: video_id.to_string(),
        offset,
        details: details.into(),
    }
}

fn write_sync(path: &Path, bytes: &[u8]) -> Result<()> {
    let display = path.display().to_string();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(&display, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&display, e))?;
    file.sync_all().map_err(|e| Error::io(&display, e))?;
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let display = path.display().to_string();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(&display, e))?;
    Ok(bytes)
}

pub fn write_feature_file(path: &Path, features: &Matrix) -> Result<()> {
    let (t, d) = features.shape();
    let mut payload = Vec::with_capacity(t * d * 8);
    for v in features.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let mut bytes = Vec::with_capacity(FEATURE_HEADER_LEN as usize + payload.len());
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&(t as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    bytes.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    bytes.extend_from_slice(&payload);
    write_sync(path, &bytes)
}

pub fn read_feature_file(
    path: &Path,
    video_id: &str,
    expect_frames: usize,
    expect_dim: usize,
) -> Result<Matrix> {
    let bytes = read_all(path)?;
    if bytes.len() < FEATURE_HEADER_LEN as usize || &bytes[..8] != FEATURE_MAGIC {
        return Err(load_err(video_id, 0, "bad feature magic"));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    if t != expect_frames || d != expect_dim {
        return Err(load_err(
            video_id,
            8,
            format!(
                "file holds {}x{}, manifest declares {}x{}",
                t, d, expect_frames, expect_dim
            ),
        ));
    }
    let payload = &bytes[FEATURE_HEADER_LEN as usize..];
    if payload.len() != t * d * 8 {
        return Err(load_err(
            video_id,
            FEATURE_HEADER_LEN,
            format!("payload is {} bytes, expected {}", payload.len(), t * d * 8),
        ));
    }
    if crc32fast::hash(payload) != crc {
        return Err(load_err(video_id, 20, "payload checksum mismatch"));
    }
    let mut data = Vec::with_capacity(t * d);
    for k in 0..t * d {
        let v = f64::from_le_bytes(payload[k * 8..k * 8 + 8].try_into().unwrap());
        if !v.is_finite() {
            return Err(load_err(
                video_id,
                FEATURE_HEADER_LEN + (k as u64) * 8,
                format!("non-finite feature value {}", v),
            ));
        }
        data.push(v);
    }
    Matrix::from_vec(t, d, data)
}

pub fn write_annotation_file(path: &Path, annotations: &UserAnnotations) -> Result<()> {
    let users = annotations.annotators();
    let frames = annotations.frames();
    let mut bytes =
        Vec::with_capacity(ANNOTATION_HEADER_LEN as usize + users * frames * 9 + frames * 8);
    bytes.extend_from_slice(ANNOTATION_MAGIC);
    bytes.extend_from_slice(&(users as u32).to_le_bytes());
    bytes.extend_from_slice(&(frames as u32).to_le_bytes());
    for v in annotations.scores_matrix().data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in annotations.mean_scores() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for u in 0..users {
        for &flag in annotations.keyshot(u) {
            bytes.push(u8::from(flag));
        }
    }
    write_sync(path, &bytes)
}

pub fn read_annotation_file(
    path: &Path,
    video_id: &str,
    expect_users: usize,
    expect_frames: usize,
) -> Result<UserAnnotations> {
    let bytes = read_all(path)?;
    if bytes.len() < ANNOTATION_HEADER_LEN as usize || &bytes[..8] != ANNOTATION_MAGIC {
        return Err(load_err(video_id, 0, "bad annotation magic"));
    }
    let users = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if users != expect_users || frames != expect_frames {
        return Err(load_err(
            video_id,
            8,
            format!(
                "file holds {} annotators x {} frames, manifest declares {} x {}",
                users, frames, expect_users, expect_frames
            ),
        ));
    }
    let expected_len =
        ANNOTATION_HEADER_LEN as usize + users * frames * 8 + frames * 8 + users * frames;
    if bytes.len() != expected_len {
        return Err(load_err(
            video_id,
            ANNOTATION_HEADER_LEN,
            format!("file is {} bytes, expected {}", bytes.len(), expected_len),
        ));
    }

    let mut offset = ANNOTATION_HEADER_LEN as usize;
    let read_f64 = |offset: &mut usize| {
        let v = f64::from_le_bytes(bytes[*offset..*offset + 8].try_into().unwrap());
        *offset += 8;
        v
    };

    let mut score_data = Vec::with_capacity(users * frames);
    for _ in 0..users * frames {
        let at = offset as u64;
        let v = read_f64(&mut offset);
        if !v.is_finite() {
            return Err(load_err(
                video_id,
                at,
                format!("non-finite annotator score {}", v),
            ));
        }
        score_data.push(v);
    }
    let scores = Matrix::from_vec(users, frames, score_data)?;

    let mut mean = Vec::with_capacity(frames);
    for _ in 0..frames {
        let at = offset as u64;
        let v = read_f64(&mut offset);
        if !v.is_finite() {
            return Err(load_err(
                video_id,
                at,
                format!("non-finite mean score {}", v),
            ));
        }
        mean.push(v);
    }

    let mut keyshots = Vec::with_capacity(users);
    for _ in 0..users {
        let mut flags = Vec::with_capacity(frames);
        for _ in 0..frames {
            let b = bytes[offset];
            if b > 1 {
                return Err(load_err(
                    video_id,
                    offset as u64,
                    format!("keyshot flag must be 0 or 1, got {}", b),
                ));
            }
            flags.push(b == 1);
            offset += 1;
        }
        keyshots.push(flags);
    }

    UserAnnotations::new(scores, mean, keyshots).map_err(|e| load_err(video_id, 0, e.to_string()))
}
