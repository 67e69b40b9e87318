use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use spectra_core::matching::cube_proxy;
use spectra_core::{render, ControlPair, ControlPointSet, MlsConfig, RgbImage, SpectralCube};

use crate::error::ApiError;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic while holding one of these locks leaves plain data behind, never
    // a half-applied edit, so the poison flag carries no information.
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Default)]
struct PointState {
    pairs: Vec<ControlPair>,
    revision: u64,
}

/// A rendered preview and the point-set revision it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct Preview {
    pub revision: u64,
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PreviewOutcome {
    Image(Preview),
    /// The set is empty at this revision.
    NoPoints { revision: u64 },
}

/// One cube, its reference image and the control points entered so far.
pub struct Session {
    pub id: String,
    pub sensor: String,
    pub stride: usize,
    cube: SpectralCube,
    preview_cube: SpectralCube,
    reference: RgbImage,
    points: Mutex<PointState>,
    last_used: Mutex<Instant>,
    /// Held for the whole of a render, so at most one runs per session.
    preview: tokio::sync::Mutex<Option<Preview>>,
    renders: AtomicU64,
}

impl Session {
    pub fn new(id: String, cube: SpectralCube, reference: RgbImage, stride: usize, sensor: String) -> Self {
        let stride = stride.max(1);
        Self {
            id,
            sensor,
            stride,
            preview_cube: cube.subsample(stride),
            cube,
            reference,
            points: Mutex::new(PointState::default()),
            last_used: Mutex::new(Instant::now()),
            preview: tokio::sync::Mutex::new(None),
            renders: AtomicU64::new(0),
        }
    }

    pub fn cube(&self) -> &SpectralCube {
        &self.cube
    }

    pub fn preview_cube(&self) -> &SpectralCube {
        &self.preview_cube
    }

    pub fn reference(&self) -> &RgbImage {
        &self.reference
    }

    pub fn touch(&self, now: Instant) {
        *lock(&self.last_used) = now;
    }

    fn idle_since(&self) -> Instant {
        *lock(&self.last_used)
    }

    /// Number of renders performed so far.
    pub fn renders(&self) -> u64 {
        self.renders.load(Ordering::Relaxed)
    }

    pub fn revision(&self) -> u64 {
        lock(&self.points).revision
    }

    /// Current revision and pairs, read under one lock.
    pub fn snapshot(&self) -> (u64, Vec<ControlPair>) {
        let state = lock(&self.points);
        (state.revision, state.pairs.clone())
    }

    /// Pairs the cube signature at `hsi` with the reference color at `rgb`.
    /// Returns the new revision and point count.
    pub fn add_point(&self, hsi: [usize; 2], rgb: [usize; 2]) -> Result<(u64, usize), ApiError> {
        let [hx, hy] = hsi;
        let [rx, ry] = rgb;
        if hx >= self.cube.width() || hy >= self.cube.height() {
            return Err(ApiError::bad_request(
                "out_of_bounds",
                format!("cube pixel ({hx}, {hy}) is outside {}x{}", self.cube.width(), self.cube.height()),
            ));
        }
        if rx >= self.reference.width() || ry >= self.reference.height() {
            return Err(ApiError::bad_request(
                "out_of_bounds",
                format!(
                    "reference pixel ({rx}, {ry}) is outside {}x{}",
                    self.reference.width(),
                    self.reference.height()
                ),
            ));
        }
        let signature = self.cube.signature(hx, hy);
        if signature.iter().all(|&v| v == 0.0) {
            let e = spectra_core::Error::ZeroSignature(format!("cube pixel ({hx}, {hy})"));
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "zero_signature", e.to_string()));
        }
        let u = signature.iter().map(|&v| v as f64).collect();
        let pair = ControlPair::new(u, self.reference.pixel(rx, ry)).with_provenance(hsi, rgb);

        let mut state = lock(&self.points);
        state.pairs.push(pair);
        state.revision += 1;
        Ok((state.revision, state.pairs.len()))
    }

    pub fn remove_point(&self, index: usize) -> Result<(u64, usize), ApiError> {
        let mut state = lock(&self.points);
        if index >= state.pairs.len() {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "point_not_found",
                format!("no point {index}; the set has {}", state.pairs.len()),
            ));
        }
        state.pairs.remove(index);
        state.revision += 1;
        Ok((state.revision, state.pairs.len()))
    }

    /// The current set with its revision; errors when it is empty.
    pub fn export(&self) -> Result<(u64, ControlPointSet), ApiError> {
        let (revision, pairs) = self.snapshot();
        if pairs.is_empty() {
            return Err(ApiError::bad_request("no_control_points", "there are no control points to export"));
        }
        let set = ControlPointSet::new(self.cube.bands(), self.sensor.clone(), pairs)
            .map_err(|e| ApiError::internal("export_failed", e.to_string()))?;
        Ok((revision, set))
    }

    /// Renders the stride-downsampled cube with the latest point set.
    ///
    /// Requests queue on the render lock. Whoever gets it renders the state
    /// current at that moment, and later arrivals reuse that image while the
    /// revision is unchanged, so a backlog collapses into one render of the
    /// newest edits.
    pub async fn preview(self: &Arc<Self>, cfg: MlsConfig) -> Result<PreviewOutcome, ApiError> {
        let mut cached = self.preview.lock().await;
        let (revision, pairs) = self.snapshot();
        if let Some(p) = cached.as_ref().filter(|p| p.revision == revision) {
            return Ok(PreviewOutcome::Image(p.clone()));
        }
        if pairs.is_empty() {
            return Ok(PreviewOutcome::NoPoints { revision });
        }
        let set = ControlPointSet::new(self.cube.bands(), "", pairs)
            .map_err(|e| ApiError::internal("render_failed", e.to_string()))?;
        let session = Arc::clone(self);
        self.renders.fetch_add(1, Ordering::Relaxed);
        let png = tokio::task::spawn_blocking(move || render(&session.preview_cube, &set, &cfg)?.to_png())
            .await
            .map_err(|e| ApiError::internal("render_failed", e.to_string()))?
            .map_err(|e| ApiError::internal("render_failed", e.to_string()))?;
        let preview = Preview { revision, png };
        *cached = Some(preview.clone());
        Ok(PreviewOutcome::Image(preview))
    }

    /// Band-mean proxy of the preview cube stretched to 0..255, for display.
    pub fn hsi_display(&self) -> RgbImage {
        let proxy = cube_proxy(&self.preview_cube).normalized();
        RgbImage::from_fn(proxy.width(), proxy.height(), |x, y| {
            let v = (proxy.at(x, y) * 255.0).round() as u8;
            [v, v, v]
        })
        .expect("preview cube is nonempty")
    }

    pub fn reference_display(&self) -> RgbImage {
        self.reference.subsample(self.stride)
    }
}

/// All live sessions, keyed by id.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    idle_expiry: Duration,
}

impl SessionStore {
    pub fn new(idle_expiry: Duration) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            idle_expiry,
        }
    }

    pub fn insert(&self, session: Session) -> Arc<Session> {
        let session = Arc::new(session);
        lock(&self.sessions).insert(session.id.clone(), Arc::clone(&session));
        session
    }

    /// Looks up a session and marks it as used.
    pub fn get(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        let session = lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))?;
        session.touch(Instant::now());
        Ok(session)
    }

    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        lock(&self.sessions)
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::session_not_found(id))
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the expiry; returns how many.
    pub fn expire_idle(&self, now: Instant) -> usize {
        let mut sessions = lock(&self.sessions);
        let before = sessions.len();
        sessions.retain(|_, s| now.saturating_duration_since(s.idle_since()) <= self.idle_expiry);
        before - sessions.len()
    }
}
