//! Loaded artifacts plus a replay clock: everything the service and the
//! offline replay compute per minute.

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde::Serialize;

use jambayes_core::alerting::{Alert, AlertEngine, AlertFrame, BottleneckView, FutureSurpriseSignal};
use jambayes_core::bn::{BayesNet, InferenceConfig, Schema};
use jambayes_core::bottleneck::{Band, BottleneckSet, CongestionProfile};
use jambayes_core::cases::{case_schema, observe, CaseConfig, Inputs, ResolvedIncident, StreamView, TargetKind};
use jambayes_core::forecast::{forecast_case, Forecast};
use jambayes_core::future_surprise::{observe_surprise, FutureSurpriseModel};
use jambayes_core::reliability::ReliabilityModel;
use jambayes_core::sim::io::Streams;
use jambayes_core::surprise::{MarginalModel, SurpriseTag};
use jambayes_core::time::Minute;

use crate::files::DataDir;

pub const API_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct CellState {
    pub cell_id: String,
    pub speed_mph: f32,
    pub band: Band,
}

#[derive(Debug, Clone, Serialize)]
pub struct BottleneckForecast {
    pub bottleneck: usize,
    pub jammed: bool,
    /// Time to clear when jammed, time to jam when open.
    pub forecast: Forecast,
}

#[derive(Debug, Clone, Serialize)]
pub struct FutureSurpriseProb {
    pub bottleneck: usize,
    pub p: f64,
    pub operating_threshold: Option<f64>,
    pub lead_minutes: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub bottlenecks: usize,
    pub training_rows: usize,
    pub data_span: Option<String>,
    pub stream_start: DateTime<Utc>,
    pub stream_minutes: Minute,
    pub reliability: bool,
    pub marginal: bool,
    pub future_surprise_lead_minutes: Option<u32>,
}

/// Everything derived from the stream at one minute.
#[derive(Debug, Clone, Serialize)]
pub struct Frame {
    pub minute: Minute,
    pub timestamp: DateTime<Utc>,
    pub forecasts: Vec<BottleneckForecast>,
    pub surprises: Vec<SurpriseTag>,
    pub future_surprises: Vec<FutureSurpriseProb>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub minute: Minute,
    pub timestamp: DateTime<Utc>,
    pub cells: Vec<CellState>,
    pub forecasts: Vec<BottleneckForecast>,
    pub surprises: Vec<SurpriseTag>,
    pub future_surprises: Vec<FutureSurpriseProb>,
    pub model: ModelInfo,
}

pub struct Live {
    pub dir: DataDir,
    pub streams: Streams,
    pub bottlenecks: BottleneckSet,
    pub profile: CongestionProfile,
    pub incidents: Vec<ResolvedIncident>,
    pub case_config: CaseConfig,
    pub schema: Schema,
    pub net: BayesNet,
    pub reliability: Option<ReliabilityModel>,
    pub marginal: Option<MarginalModel>,
    pub future: Option<FutureSurpriseModel>,
    pub inference: InferenceConfig,
    pub engine: AlertEngine,
    pub alerts: Vec<Alert>,
    pub frame: Frame,
}

/// First replay minute: the start of the held-out quarter, on the hour.
pub fn default_start(minutes: Minute) -> Minute {
    minutes * 3 / 4 / 60 * 60
}

impl Live {
    pub fn load(dir: DataDir, start: Option<Minute>) -> Result<Live> {
        let streams = dir.streams()?;
        let bottlenecks = dir.bottlenecks()?;
        let profile = dir.profile()?;
        let schema_file = dir.schema()?;
        if schema_file.bottleneck_cells != bottlenecks.bottlenecks.iter().map(|b| b.cells.len()).collect::<Vec<_>>() {
            bail!("schema.json and bottlenecks.json describe different bottlenecks");
        }
        let net = dir.model()?;
        let schema = case_schema(&schema_file.bottleneck_cells);
        if net.schema.variables() != schema.variables() {
            bail!("model.json was trained on a different case layout");
        }
        let reliability = dir.reliability()?;
        let marginal = dir.marginal()?;
        let future = dir.future_surprise()?;
        if let Some(m) = &marginal {
            if m.bottleneck_count() != bottlenecks.len() {
                bail!("marginal.json covers {} bottlenecks, expected {}", m.bottleneck_count(), bottlenecks.len());
            }
        }
        if future.is_some() && marginal.is_none() {
            bail!("future_surprise.json needs marginal.json for its surprise features");
        }
        let engine =
            AlertEngine::from_store(bottlenecks.len(), &dir.policies()?).context("loading policies.json")?;
        let minutes = streams.stream.minutes();
        let first = schema_file.config.features.horizon_minutes;
        let start = start.unwrap_or_else(|| default_start(minutes)).max(first);
        if start >= minutes {
            bail!("replay start {start} is past the end of the stream ({minutes} minutes)");
        }
        let mut live = Live {
            incidents: dir.incidents()?,
            case_config: schema_file.config,
            dir,
            streams,
            bottlenecks,
            profile,
            schema,
            net,
            reliability,
            marginal,
            future,
            inference: InferenceConfig::default(),
            engine,
            alerts: Vec::new(),
            frame: Frame {
                minute: start,
                timestamp: DateTime::<Utc>::MIN_UTC,
                forecasts: Vec::new(),
                surprises: Vec::new(),
                future_surprises: Vec::new(),
            },
        };
        live.frame = live.frame_at(start)?;
        Ok(live)
    }

    pub fn inputs(&self) -> Inputs<'_> {
        Inputs {
            network: &self.streams.network,
            bottlenecks: &self.bottlenecks,
            stream: &self.streams.stream,
            context: &self.streams.context,
            incidents: &self.incidents,
        }
    }

    pub fn last_minute(&self) -> Minute {
        self.streams.stream.minutes() - 1
    }

    pub fn timestamp(&self, m: Minute) -> DateTime<Utc> {
        DateTime::<Utc>::from_naive_utc_and_offset(self.streams.stream.calendar().datetime(m), Utc)
    }

    pub fn frame_at(&self, m: Minute) -> Result<Frame> {
        let inputs = self.inputs();
        let view = StreamView::new(&self.streams.stream, m);
        let case = observe(&inputs, &view, m, &self.case_config)?;
        let surprises = match &self.marginal {
            Some(marginal) => marginal.tags_at(&self.streams.stream, &self.streams.context, &self.bottlenecks, m)?,
            None => Vec::new(),
        };
        let mut forecasts = Vec::with_capacity(self.bottlenecks.len());
        for (b, bc) in case.bottlenecks.iter().enumerate() {
            let jammed = bc.features.currently_jammed;
            let kind = if jammed { TargetKind::Clear } else { TargetKind::Jam };
            let mut forecast = forecast_case(&self.net, &case, b, kind, &self.inference)?;
            if let Some(rel) = &self.reliability {
                let p = rel.p_success(&self.schema, &case, b, kind, &self.inference)?;
                rel.annotate(&mut forecast, p);
            }
            if self.marginal.is_some() {
                forecast.surprise_flag = Some(surprises.iter().any(|t| t.bottleneck == b));
            }
            forecasts.push(BottleneckForecast {
                bottleneck: b,
                jammed,
                forecast,
            });
        }
        let future_surprises = match (&self.future, &self.marginal) {
            (Some(model), Some(marginal)) => {
                let (obs, _) = observe_surprise(&inputs, &self.schema, marginal, m, &self.case_config)?;
                model
                    .entries
                    .iter()
                    .map(|e| {
                        Ok(FutureSurpriseProb {
                            bottleneck: e.bottleneck,
                            p: e.classifier.probability(&obs, &self.inference)?,
                            operating_threshold: e.operating_threshold,
                            lead_minutes: model.lead_minutes,
                        })
                    })
                    .collect::<Result<_>>()?
            }
            _ => Vec::new(),
        };
        Ok(Frame {
            minute: m,
            timestamp: self.timestamp(m),
            forecasts,
            surprises,
            future_surprises,
        })
    }

    fn views(frame: &Frame, count: usize) -> Vec<BottleneckView> {
        let mut views = vec![BottleneckView::default(); count];
        for f in &frame.forecasts {
            let v = &mut views[f.bottleneck];
            v.jammed = f.jammed;
            if f.jammed {
                v.time_to_clear = Some(f.forecast.clone());
            } else {
                v.time_to_jam = Some(f.forecast.clone());
            }
        }
        for s in &frame.future_surprises {
            views[s.bottleneck].future_surprise = Some(FutureSurpriseSignal {
                p: s.p,
                operating_threshold: s.operating_threshold,
            });
        }
        views
    }

    /// Runs the alert engine on the current frame.
    pub fn evaluate_current(&mut self) -> Result<Vec<Alert>> {
        let views = Self::views(&self.frame, self.bottlenecks.len());
        let alerts = self.engine.evaluate(&AlertFrame {
            minute: self.frame.minute,
            calendar: self.streams.stream.calendar(),
            bottlenecks: &views,
            surprises: &self.frame.surprises,
        })?;
        self.dir.append_alerts(&alerts)?;
        self.alerts.extend(alerts.iter().cloned());
        Ok(alerts)
    }

    /// Moves the clock forward minute by minute, evaluating alerts at each
    /// step. Stops at the end of the stream.
    pub fn advance(&mut self, minutes: u32) -> Result<Vec<Alert>> {
        let mut raised = Vec::new();
        for _ in 0..minutes {
            if self.frame.minute >= self.last_minute() {
                break;
            }
            self.frame = self.frame_at(self.frame.minute + 1)?;
            raised.extend(self.evaluate_current()?);
        }
        Ok(raised)
    }

    pub fn exhausted(&self) -> bool {
        self.frame.minute >= self.last_minute()
    }

    pub fn model_info(&self) -> ModelInfo {
        ModelInfo {
            bottlenecks: self.bottlenecks.len(),
            training_rows: self.net.meta.rows,
            data_span: self.net.meta.data_span.clone(),
            stream_start: self.timestamp(0),
            stream_minutes: self.streams.stream.minutes(),
            reliability: self.reliability.is_some(),
            marginal: self.marginal.is_some(),
            future_surprise_lead_minutes: self.future.as_ref().map(|f| f.lead_minutes),
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let f = &self.frame;
        let speeds = self.streams.stream.frame(f.minute);
        let cells = speeds
            .iter()
            .enumerate()
            .map(|(c, &speed)| CellState {
                cell_id: self.streams.network.cell_id(c).to_string(),
                speed_mph: speed,
                band: Band::of(speed),
            })
            .collect();
        Snapshot {
            schema_version: API_SCHEMA_VERSION,
            minute: f.minute,
            timestamp: f.timestamp,
            cells,
            forecasts: f.forecasts.clone(),
            surprises: f.surprises.clone(),
            future_surprises: f.future_surprises.clone(),
            model: self.model_info(),
        }
    }
}
