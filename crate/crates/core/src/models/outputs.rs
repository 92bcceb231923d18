use ndarray::Array2;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenegen::ImageId;

/// Per-image representation rows and positive-class confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    pub image_ids: Vec<ImageId>,
    pub representations: Array2<f64>,
    pub confidences: Vec<f64>,
}

impl ModelOutputs {
    pub fn new(image_ids: Vec<ImageId>, representations: Array2<f64>, confidences: Vec<f64>) -> Result<Self> {
        let out = ModelOutputs {
            image_ids,
            representations,
            confidences,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.image_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.representations.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.image_ids.len();
        if self.representations.nrows() != n || self.confidences.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} ids, {} representation rows, {} confidences",
                self.representations.nrows(),
                self.confidences.len()
            )));
        }
        if self.representations.ncols() < 2 {
            return Err(Error::Invalid("representation dimension must be at least 2".into()));
        }
        if let Some(c) = self.confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Invalid(format!("confidence {c} outside [0, 1]")));
        }
        if self.representations.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite representation entry".into()));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["image_id".to_string(), "confidence".to_string()];
        header.extend((0..self.dim()).map(|j| format!("r{j}")));
        wr.write_record(&header)?;
        for (i, id) in self.image_ids.iter().enumerate() {
            let mut rec = vec![id.to_string(), self.confidences[i].to_string()];
            rec.extend(self.representations.row(i).iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::Serde(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        if header.len() < 4 || &header[0] != "image_id" || &header[1] != "confidence" {
            return Err(Error::ImportFormat(
                "expected header image_id,confidence,r0,r1,...".into(),
            ));
        }
        for (j, h) in header.iter().skip(2).enumerate() {
            if h != format!("r{j}") {
                return Err(Error::ImportFormat(format!("unexpected column {h:?}")));
            }
        }
        let d = header.len() - 2;
        let mut ids = Vec::new();
        let mut conf = Vec::new();
        let mut flat = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::ImportFormat(format!("row {}: bad {what}", line + 1));
            ids.push(rec[0].trim().parse::<ImageId>().map_err(|_| bad("image_id"))?);
            conf.push(rec[1].trim().parse::<f64>().map_err(|_| bad("confidence"))?);
            for j in 0..d {
                flat.push(rec[j + 2].trim().parse::<f64>().map_err(|_| bad("representation"))?);
            }
        }
        let n = ids.len();
        let reps = Array2::from_shape_vec((n, d), flat).expect("row lengths checked by csv");
        ModelOutputs::new(ids, reps, conf)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}
