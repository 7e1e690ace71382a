//! Multipart patient and slice-stack uploads.
//!
//! Accepted fields:
//! - `phantom`: catalog phantom id (text)
//! - `mesh`: STL or OBJ file; the format follows the file name, else the content
//! - `meta`: slice-stack `meta.json` contents, plus one `slice_<i>` file per slice
//! - `iso`, `decimate`, `largest_component`: reconstruction options (text)

use axum::extract::Multipart;
use ebrt_core::ct::{load_slice_stack, reconstruct, IsoMesh, IsoStatus, ReconstructOptions};
use ebrt_core::geometry::io::{parse_mesh, MeshFormat};
use ebrt_core::geometry::TriMesh;

use crate::error::ApiError;

#[derive(Debug)]
pub enum UploadSource {
    Phantom(String),
    Mesh { name: String, bytes: Vec<u8>, format: MeshFormat },
    Stack { dir: tempfile::TempDir },
}

#[derive(Debug)]
pub struct Upload {
    pub source: UploadSource,
    pub options: ReconstructOptions,
}

fn slice_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("slice_")?;
    let digits = rest.strip_suffix(".raw").unwrap_or(rest);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn text_field<T: std::str::FromStr>(name: &str, text: &str) -> Result<T, ApiError> {
    text.trim()
        .parse()
        .map_err(|_| ApiError::unprocessable(format!("field {name:?} has invalid value {text:?}")))
}

pub async fn read_upload(mut mp: Multipart) -> Result<Upload, ApiError> {
    let mut phantom = None;
    let mut mesh = None;
    let mut meta: Option<Vec<u8>> = None;
    let mut slices: Vec<(String, Vec<u8>)> = Vec::new();
    let mut options = ReconstructOptions::default();
    while let Some(field) = mp.next_field().await? {
        let name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        match name.as_str() {
            "phantom" => phantom = Some(field.text().await?.trim().to_string()),
            "mesh" => {
                let bytes = field.bytes().await?.to_vec();
                let label = file_name.unwrap_or_else(|| "uploaded mesh".into());
                let format = MeshFormat::from_path(label.as_ref()).unwrap_or_else(|| MeshFormat::sniff(&bytes));
                mesh = Some((label, bytes, format));
            }
            "meta" => meta = Some(field.bytes().await?.to_vec()),
            "iso" => options.iso = text_field(&name, &field.text().await?)?,
            "decimate" => options.target_triangles = Some(text_field(&name, &field.text().await?)?),
            "largest_component" => options.largest_component = text_field(&name, &field.text().await?)?,
            _ => {
                let index = slice_index(&name)
                    .or_else(|| file_name.as_deref().and_then(slice_index))
                    .ok_or_else(|| ApiError::unprocessable(format!("unexpected upload field {name:?}")))?;
                slices.push((format!("slice_{index}.raw"), field.bytes().await?.to_vec()));
            }
        }
    }
    let stack = meta.is_some() || !slices.is_empty();
    let source = match (phantom, mesh, stack) {
        (Some(id), None, false) => UploadSource::Phantom(id),
        (None, Some((name, bytes, format)), false) => UploadSource::Mesh { name, bytes, format },
        (None, None, true) => {
            let meta = meta.ok_or_else(|| ApiError::unprocessable("slice stack upload lacks the meta field"))?;
            let dir = tempfile::tempdir().map_err(|e| ApiError::internal(e.to_string()))?;
            let write = |name: &str, bytes: &[u8]| {
                std::fs::write(dir.path().join(name), bytes).map_err(|e| ApiError::internal(e.to_string()))
            };
            write("meta.json", &meta)?;
            for (name, bytes) in &slices {
                if dir.path().join(name).exists() {
                    return Err(ApiError::unprocessable(format!("{name} uploaded twice")));
                }
                write(name, bytes)?;
            }
            UploadSource::Stack { dir }
        }
        _ => {
            return Err(ApiError::unprocessable(
                "upload exactly one of: phantom, mesh, or meta + slice_<i> files",
            ))
        }
    };
    Ok(Upload { source, options })
}

/// Surface for a mesh or stack upload (blocking). Phantoms are resolved by
/// the caller.
pub fn build_surface(upload: &Upload) -> Result<(String, IsoMesh), ApiError> {
    let opts = &upload.options;
    let (label, mut iso) = match &upload.source {
        UploadSource::Phantom(_) => unreachable!("phantoms carry no surface"),
        UploadSource::Mesh { name, bytes, format } => {
            let mesh: TriMesh = parse_mesh(bytes, *format)?;
            let iso = IsoMesh {
                mesh,
                iso: opts.iso,
                source: name.clone(),
                decimation_ratio: 1.0,
                status: IsoStatus::Ok,
            };
            (name.clone(), iso)
        }
        UploadSource::Stack { dir } => {
            let grid = load_slice_stack(dir.path())?;
            let no_decimation = ReconstructOptions {
                target_triangles: None,
                ..opts.clone()
            };
            ("ct".to_string(), reconstruct(&grid, "ct", &no_decimation)?)
        }
    };
    if iso.mesh.is_empty() {
        return Err(ApiError::unprocessable(format!(
            "surface is empty (iso {} {:?})",
            iso.iso, iso.status
        )));
    }
    if let Some(t) = opts.target_triangles {
        if t < iso.mesh.triangle_count() {
            iso = ebrt_core::ct::decimate(&iso, t)?;
        }
    }
    Ok((label, iso))
}
