//! `.ivct` files: a short text header followed by little-endian `f64`
//! samples. The header records the geometry and, for incomplete data, the
//! sampling vector.
//!
//! ```text
//! IVCT 1
//! kind=sinogram
//! geometry=views=720 detectors=672 ...
//! sampling=v1;len=720;...
//! views=0,10,20,...
//! rows=72
//! cols=672
//! end
//! <rows*cols f64 values>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::physics::{Image, ScanGeometry, Sinogram};
use crate::sampling::SamplingVector;

const FIRST_LINE: &str = "IVCT 1";

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Image(Image),
    Sinogram(Sinogram),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvctFile {
    pub geometry: Option<ScanGeometry>,
    pub sampling: Option<SamplingVector>,
    pub payload: Payload,
}

impl IvctFile {
    pub fn image(img: Image, geo: &ScanGeometry) -> Self {
        IvctFile {
            geometry: Some(geo.clone()),
            sampling: None,
            payload: Payload::Image(img),
        }
    }

    pub fn sinogram(sino: Sinogram, geo: &ScanGeometry, sampling: Option<SamplingVector>) -> Self {
        IvctFile {
            geometry: Some(geo.clone()),
            sampling,
            payload: Payload::Sinogram(sino),
        }
    }

    pub fn into_image(self, path: &Path) -> Result<Image> {
        match self.payload {
            Payload::Image(i) => Ok(i),
            Payload::Sinogram(_) => Err(Error::format(path, "expected an image, found a sinogram")),
        }
    }

    pub fn into_sinogram(self, path: &Path) -> Result<Sinogram> {
        match self.payload {
            Payload::Sinogram(s) => Ok(s),
            Payload::Image(_) => Err(Error::format(path, "expected a sinogram, found an image")),
        }
    }
}

pub fn write_ivct(path: &Path, file: &IvctFile) -> Result<()> {
    let mut header = format!("{FIRST_LINE}\n");
    let (kind, rows, cols, data) = match &file.payload {
        Payload::Image(i) => ("image", i.size, i.size, &i.data),
        Payload::Sinogram(s) => ("sinogram", s.rows(), s.n_detectors, &s.data),
    };
    header.push_str(&format!("kind={kind}\n"));
    if let Some(g) = &file.geometry {
        header.push_str(&format!("geometry={}\n", g.summary()));
    }
    if let Some(v) = &file.sampling {
        header.push_str(&format!("sampling={}\n", v.to_rle()));
    }
    match &file.payload {
        Payload::Image(i) => header.push_str(&format!("spacing={}\n", i.pixel_spacing)),
        Payload::Sinogram(s) => {
            let views: Vec<String> = s.view_indices.iter().map(|v| v.to_string()).collect();
            header.push_str(&format!("views={}\n", views.join(",")));
        }
    }
    header.push_str(&format!("rows={rows}\ncols={cols}\nend\n"));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    out.write_all(header.as_bytes()).map_err(io)?;
    for v in data {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_ivct(path: &Path) -> Result<IvctFile> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let bad = |m: &str| Error::format(path, m);
    let mut fields = BTreeMap::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(bad("header ends without an `end` line"));
        }
        let l = line.trim_end_matches('\n');
        if first {
            if l != FIRST_LINE {
                return Err(bad("not an IVCT file"));
            }
            first = false;
            continue;
        }
        if l == "end" {
            break;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| bad("malformed header line"))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| Error::format(path, format!("header lacks {k}")));
    let count = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::format(path, format!("bad {k}"))) };
    let (rows, cols) = (count("rows")?, count("cols")?);
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.len() != rows * cols * 8 {
        return Err(bad("payload length does not match rows x cols"));
    }
    let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let geometry = match fields.get("geometry") {
        Some(s) => Some(ScanGeometry::parse_summary(s)?),
        None => None,
    };
    let sampling = match fields.get("sampling") {
        Some(s) => Some(SamplingVector::from_rle(s)?),
        None => None,
    };
    let payload = match get("kind")?.as_str() {
        "image" => {
            if rows != cols {
                return Err(bad("images must be square"));
            }
            let spacing = get("spacing")?.parse().map_err(|_| bad("bad spacing"))?;
            Payload::Image(Image::new(rows, spacing, data)?)
        }
        "sinogram" => {
            let views = get("views")?;
            let views = if views.is_empty() {
                Vec::new()
            } else {
                views
                    .split(',')
                    .map(|v| v.parse::<usize>().map_err(|_| bad("bad view index")))
                    .collect::<Result<Vec<_>>>()?
            };
            if views.len() != rows {
                return Err(bad("view list does not match the row count"));
            }
            Payload::Sinogram(Sinogram::new(cols, views, data)?)
        }
        other => return Err(Error::format(path, format!("unknown kind {other:?}"))),
    };
    Ok(IvctFile {
        geometry,
        sampling,
        payload,
    })
}

/// Sampling vectors as text files hold a single RLE line.
pub fn write_sampling(path: &Path, v: &SamplingVector) -> Result<()> {
    std::fs::write(path, format!("{}\n", v.to_rle())).map_err(|e| Error::io(path, e))
}

pub fn read_sampling(path: &Path) -> Result<SamplingVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SamplingVector::from_rle(text.trim()).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{make_geometry, GeometryConfig};
    use crate::sampling::svct_vector;

    #[test]
    fn roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_geometry(&GeometryConfig::desk()).unwrap();
        let img = Image::new(64, 4.0, (0..4096).map(|i| (i as f64).sin()).collect()).unwrap();
        let p = dir.path().join("img.ivct");
        write_ivct(&p, &IvctFile::image(img.clone(), &g)).unwrap();
        let back = read_ivct(&p).unwrap();
        assert_eq!(back.geometry.as_ref().unwrap().summary(), g.summary());
        assert_eq!(back.into_image(&p).unwrap(), img);

        let v = svct_vector(18, 720).unwrap();
        let idx = v.indices();
        let sino = Sinogram::new(128, idx.clone(), (0..18 * 128).map(|i| i as f64 * 0.25).collect()).unwrap();
        let p = dir.path().join("s.ivct");
        write_ivct(&p, &IvctFile::sinogram(sino.clone(), &g, Some(v.clone()))).unwrap();
        let back = read_ivct(&p).unwrap();
        assert_eq!(back.sampling.as_ref(), Some(&v));
        assert_eq!(back.clone().into_sinogram(&p).unwrap(), sino);
        assert!(back.into_image(&p).is_err());

        let vp = dir.path().join("v.txt");
        write_sampling(&vp, &v).unwrap();
        assert_eq!(read_sampling(&vp).unwrap(), v);

        std::fs::write(&p, b"IVCT 1\nkind=image\nrows=2\ncols=2\nspacing=1\nend\n1234").unwrap();
        assert!(read_ivct(&p).is_err());
    }
}
