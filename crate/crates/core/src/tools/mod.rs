//! Built-in synthetic tool pack.
//!
//! Small, deterministic vector tools over the [`layer`] format. They are
//! built to fail the way real GIS stacks do: CRS mismatches, invalid
//! topologies, missing files, and (through the sandbox) write locks. Error
//! text imitates Python tracebacks so the denoiser sees realistic input.
//!
//! Stylistic parameters in this pack: `title`, `color_ramp`, and `alpha` on
//! `render_map`.

pub mod layer;
pub mod render;

use std::sync::Arc;

use crate::args::{ArgValue, Args};
use crate::registry::{ParamKind, ParamRole, ParamSpec, Registry, ToolSchema};
use crate::sandbox::{ErrorCategory, ToolContext, ToolExecutor, ToolFailure, ToolOutput};

use layer::{circle, convex_hull, grow_polygon, to_web_mercator, to_wgs84, Feature, Geometry, Layer, WEB_MERCATOR, WGS84};
use render::{encode_png, render_layers, MapStyle, COLOR_RAMPS};

type ToolFn = fn(&ToolContext, &Args) -> Result<ToolOutput, ToolFailure>;

/// Adapts a plain function into a [`ToolExecutor`].
pub struct FnTool(pub ToolFn);

impl ToolExecutor for FnTool {
    fn execute(&self, ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
        (self.0)(ctx, args)
    }
}

/// Schema and implementation of every built-in tool.
pub fn builtin_tools() -> Vec<(ToolSchema, ToolFn)> {
    use ParamKind::*;
    vec![
        (
            ToolSchema::new("copy_layer", "Copies a vector layer to a new file.")
                .param(ParamSpec::input_path("input"))
                .param(ParamSpec::output_path("output")),
            copy_layer,
        ),
        (
            ToolSchema::new("reproject_layer", "Reprojects a vector layer to the target coordinate reference system.")
                .param(ParamSpec::input_path("input"))
                .param(ParamSpec::new("target_crs", Enum).values([WGS84, WEB_MERCATOR]).required())
                .param(ParamSpec::output_path("output")),
            reproject_layer,
        ),
        (
            ToolSchema::new(
                "buffer_features",
                "Buffers every feature by a distance in layer units. Requires a projected CRS.",
            )
            .param(ParamSpec::input_path("input"))
            .param(ParamSpec::new("distance", Real).required().describe("buffer distance in metres"))
            .param(ParamSpec::new("segments", Integer).describe("vertices per buffered point (default 32)"))
            .param(ParamSpec::output_path("output")),
            buffer_features,
        ),
        (
            ToolSchema::new("clip_layer", "Keeps the features whose centroid falls inside the mask polygons.")
                .param(ParamSpec::input_path("input"))
                .param(ParamSpec::input_path("mask"))
                .param(ParamSpec::output_path("output")),
            clip_layer,
        ),
        (
            ToolSchema::new(
                "filter_features",
                "Keeps features matching `field op value` (op is one of == != > >= < <=).",
            )
            .param(ParamSpec::input_path("input"))
            .param(ParamSpec::new("expression", String).required())
            .param(ParamSpec::output_path("output")),
            filter_features,
        ),
        (
            ToolSchema::new("merge_layers", "Concatenates layers that share a CRS.")
                .param(ParamSpec::new("inputs", List).items(Path).role(ParamRole::InputPath).required())
                .param(ParamSpec::output_path("output")),
            merge_layers,
        ),
        (
            ToolSchema::new("fix_geometry", "Repairs invalid polygons by replacing them with their convex hull.")
                .param(ParamSpec::input_path("input"))
                .param(ParamSpec::output_path("output")),
            fix_geometry,
        ),
        (
            ToolSchema::new("check_geometry", "Reports feature count and invalid geometries without writing anything.")
                .param(ParamSpec::input_path("input")),
            check_geometry,
        ),
        (
            ToolSchema::new("calculate_area", "Adds a polygon area attribute. Requires a projected CRS.")
                .param(ParamSpec::input_path("input"))
                .param(ParamSpec::new("field", String).describe("attribute name (default `area`)"))
                .param(ParamSpec::output_path("output")),
            calculate_area,
        ),
        (
            ToolSchema::new(
                "zonal_summary",
                "Counts points (and optionally sums a point attribute) per zone polygon.",
            )
            .param(ParamSpec::input_path("zones"))
            .param(ParamSpec::input_path("points"))
            .param(ParamSpec::new("field", String))
            .param(ParamSpec::output_path("output")),
            zonal_summary,
        ),
        (
            ToolSchema::new("render_map", "Renders layers (bottom first) into a PNG map.")
                .param(ParamSpec::new("layers", List).items(Path).role(ParamRole::InputPath).required())
                .param(ParamSpec::output_path("output"))
                .param(ParamSpec::new("title", String).role(ParamRole::Stylistic))
                .param(ParamSpec::new("color_ramp", Enum).values(COLOR_RAMPS).role(ParamRole::Stylistic))
                .param(ParamSpec::new("alpha", Real).role(ParamRole::Stylistic))
                .param(ParamSpec::new("width", Integer))
                .param(ParamSpec::new("height", Integer))
                .map_product(),
            render_map,
        ),
        (
            ToolSchema::new("sleep_tool", "Waits for the given number of seconds.")
                .param(ParamSpec::new("seconds", Real).required()),
            sleep_tool,
        ),
        (
            ToolSchema::new("crash_after_declare", "Diagnostic tool that always crashes before writing its output.")
                .param(ParamSpec::input_path("input"))
                .param(ParamSpec::output_path("output")),
            crash_after_declare,
        ),
    ]
}

/// Executor for a built-in tool name.
pub fn builtin_executor(name: &str) -> Option<Arc<dyn ToolExecutor>> {
    builtin_tools()
        .into_iter()
        .find(|(s, _)| s.name == name)
        .map(|(_, f)| Arc::new(FnTool(f)) as Arc<dyn ToolExecutor>)
}

/// Registry holding the whole built-in pack.
pub fn synthetic_registry() -> Registry {
    let mut registry = Registry::new();
    for (schema, f) in builtin_tools() {
        registry
            .register(schema, Arc::new(FnTool(f)))
            .expect("built-in schemas are valid and unique");
    }
    registry
}

fn str_arg<'a>(args: &'a Args, name: &str) -> &'a str {
    args.get(name).and_then(ArgValue::as_str).unwrap_or_default()
}

fn path_list(args: &Args, name: &str) -> Vec<String> {
    args.get(name)
        .and_then(ArgValue::as_list)
        .map(|items| items.iter().filter_map(ArgValue::as_str).map(str::to_owned).collect())
        .unwrap_or_default()
}

fn load_layer(ctx: &ToolContext, rel: &str) -> Result<Layer, ToolFailure> {
    let text = ctx.read_to_string(rel)?;
    serde_json::from_str(&text).map_err(|e| {
        ToolFailure::raw(format!(
            "Traceback (most recent call last):\n  File \"/opt/geo/io.py\", line 88, in read_layer\n    return parse(fp)\nValueError: '{rel}' is not a valid vector layer: {e}"
        ))
    })
}

fn save_layer(ctx: &ToolContext, rel: &str, layer: &Layer) -> Result<(), ToolFailure> {
    let body = serde_json::to_vec_pretty(layer).map_err(|e| ToolFailure::internal(e.to_string()))?;
    ctx.write(rel, &body)
}

fn require_valid(layer: &Layer, rel: &str) -> Result<(), ToolFailure> {
    if let Some((i, f)) = layer.features.iter().enumerate().find(|(_, f)| !f.geometry.is_valid()) {
        let [x, y] = f.geometry.centroid();
        return Err(ToolFailure::raw(format!(
            "Traceback (most recent call last):\n  File \"/opt/geo/ops.py\", line 211, in apply\n    geom = geom.buffer(0 if fix else d)\nshapely.errors.TopologyException: Self-intersection in feature {i} of '{rel}' at or near point {x:.3} {y:.3}"
        )));
    }
    Ok(())
}

fn require_projected(layer: &Layer, rel: &str, op: &str) -> Result<(), ToolFailure> {
    if layer.is_geographic() {
        return Err(ToolFailure::raw(format!(
            "pyproj.exceptions.CRSError: CRS mismatch: {op} needs a projected CRS in metres but '{rel}' uses {} (geographic); expected {WEB_MERCATOR}",
            layer.crs
        )));
    }
    Ok(())
}

fn require_same_crs(a: &Layer, b: &Layer) -> Result<(), ToolFailure> {
    if a.crs != b.crs {
        return Err(ToolFailure::raw(format!(
            "Traceback (most recent call last):\n  File \"/opt/geo/overlay.py\", line 57, in overlay\n    _check_crs(left, right)\nValueError: CRS mismatch: {} vs {}",
            a.crs, b.crs
        )));
    }
    Ok(())
}

fn copy_layer(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, output) = (str_arg(args, "input"), str_arg(args, "output"));
    let layer = load_layer(ctx, input)?;
    save_layer(ctx, output, &layer)?;
    Ok(ToolOutput::new(format!("copied {} features to {output}", layer.features.len())))
}

fn reproject_layer(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, output) = (str_arg(args, "input"), str_arg(args, "output"));
    let target = str_arg(args, "target_crs");
    let mut layer = load_layer(ctx, input)?;
    let transform: fn([f64; 2]) -> [f64; 2] = match (layer.crs.as_str(), target) {
        (a, b) if a == b => |p| p,
        (WGS84, WEB_MERCATOR) => to_web_mercator,
        (WEB_MERCATOR, WGS84) => to_wgs84,
        (src, _) => {
            return Err(ToolFailure::raw(format!(
                "pyproj.exceptions.CRSError: Invalid projection: unsupported source CRS {src}"
            )))
        }
    };
    for f in &mut layer.features {
        f.geometry = f.geometry.map_points(transform);
    }
    layer.crs = target.to_owned();
    save_layer(ctx, output, &layer)?;
    Ok(ToolOutput::new(format!("reprojected {} features to {target}", layer.features.len())))
}

fn buffer_features(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, output) = (str_arg(args, "input"), str_arg(args, "output"));
    let distance = args.get("distance").and_then(ArgValue::as_f64).unwrap_or(0.0);
    let segments = args.get("segments").and_then(ArgValue::as_f64).unwrap_or(32.0);
    if !(distance > 0.0) {
        return Err(ToolFailure::raw(format!("ValueError: invalid value for distance: {distance} (must be > 0)")));
    }
    if !(3.0..=4096.0).contains(&segments) {
        return Err(ToolFailure::raw(format!("ValueError: invalid value for segments: {segments}")));
    }
    let mut layer = load_layer(ctx, input)?;
    require_projected(&layer, input, "buffer")?;
    require_valid(&layer, input)?;
    for f in &mut layer.features {
        ctx.checkpoint()?;
        f.geometry = match &f.geometry {
            Geometry::Point(p) => Geometry::Polygon(vec![circle(*p, distance, segments as usize)]),
            Geometry::Polygon(rings) => Geometry::Polygon(grow_polygon(rings, distance)),
        };
    }
    save_layer(ctx, output, &layer)?;
    Ok(ToolOutput::new(format!("buffered {} features by {distance} into {output}", layer.features.len())))
}

fn clip_layer(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, mask_path, output) = (str_arg(args, "input"), str_arg(args, "mask"), str_arg(args, "output"));
    let layer = load_layer(ctx, input)?;
    let mask = load_layer(ctx, mask_path)?;
    require_same_crs(&layer, &mask)?;
    require_valid(&mask, mask_path)?;
    let kept: Vec<Feature> = layer
        .features
        .iter()
        .filter(|f| {
            let c = f.geometry.centroid();
            mask.features.iter().any(|m| m.geometry.contains(c))
        })
        .cloned()
        .collect();
    let n = kept.len();
    save_layer(ctx, output, &Layer::new(layer.crs.clone(), kept))?;
    Ok(ToolOutput::new(format!("kept {n} of {} features in {output}", layer.features.len())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Eq,
    Ne,
    Gt,
    Ge,
    Lt,
    Le,
}

fn parse_expression(expr: &str) -> Option<(String, Op, serde_json::Value)> {
    const OPS: [(&str, Op); 6] = [
        ("==", Op::Eq),
        ("!=", Op::Ne),
        (">=", Op::Ge),
        ("<=", Op::Le),
        (">", Op::Gt),
        ("<", Op::Lt),
    ];
    let (pos, token, op) = OPS.iter().filter_map(|(t, op)| expr.find(t).map(|p| (p, *t, *op))).min_by_key(|x| x.0)?;
    let field = expr[..pos].trim();
    let raw = expr[pos + token.len()..].trim();
    if field.is_empty() || raw.is_empty() || !field.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return None;
    }
    let value = if let Some(s) = raw.strip_prefix('\'').and_then(|r| r.strip_suffix('\'')) {
        serde_json::Value::String(s.to_owned())
    } else if let Some(s) = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
        serde_json::Value::String(s.to_owned())
    } else {
        serde_json::Value::from(raw.parse::<f64>().ok()?)
    };
    Some((field.to_owned(), op, value))
}

fn compare(lhs: &serde_json::Value, op: Op, rhs: &serde_json::Value) -> bool {
    use std::cmp::Ordering;
    let ord = match (lhs.as_f64(), rhs.as_f64()) {
        (Some(a), Some(b)) => a.partial_cmp(&b),
        _ => match (lhs.as_str(), rhs.as_str()) {
            (Some(a), Some(b)) => Some(a.cmp(b)),
            _ => None,
        },
    };
    match (op, ord) {
        (Op::Eq, Some(o)) => o == Ordering::Equal,
        (Op::Ne, Some(o)) => o != Ordering::Equal,
        (Op::Ne, None) => true,
        (Op::Gt, Some(o)) => o == Ordering::Greater,
        (Op::Ge, Some(o)) => o != Ordering::Less,
        (Op::Lt, Some(o)) => o == Ordering::Less,
        (Op::Le, Some(o)) => o != Ordering::Greater,
        _ => false,
    }
}

fn filter_features(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, output) = (str_arg(args, "input"), str_arg(args, "output"));
    let expr = str_arg(args, "expression");
    let (field, op, value) = parse_expression(expr)
        .ok_or_else(|| ToolFailure::raw(format!("ValueError: invalid expression '{expr}'; expected `field op value`")))?;
    let layer = load_layer(ctx, input)?;
    if !layer.features.is_empty() && layer.features.iter().all(|f| !f.properties.contains_key(&field)) {
        return Err(ToolFailure::raw(format!(
            "Traceback (most recent call last):\n  File \"/opt/geo/query.py\", line 31, in query\n    col = frame[field]\nKeyError: '{field}' (available attributes: {})",
            layer.features[0].properties.keys().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let kept: Vec<Feature> = layer
        .features
        .iter()
        .filter(|f| f.properties.get(&field).is_some_and(|v| compare(v, op, &value)))
        .cloned()
        .collect();
    let n = kept.len();
    save_layer(ctx, output, &Layer::new(layer.crs.clone(), kept))?;
    Ok(ToolOutput::new(format!("{n} of {} features match `{expr}`", layer.features.len())))
}

fn merge_layers(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let inputs = path_list(args, "inputs");
    let output = str_arg(args, "output");
    let Some((first, rest)) = inputs.split_first() else {
        return Err(ToolFailure::raw("ValueError: invalid value for inputs: need at least one layer"));
    };
    let mut merged = load_layer(ctx, first)?;
    for path in rest {
        let next = load_layer(ctx, path)?;
        require_same_crs(&merged, &next)?;
        merged.features.extend(next.features);
    }
    save_layer(ctx, output, &merged)?;
    Ok(ToolOutput::new(format!("merged {} layers ({} features) into {output}", inputs.len(), merged.features.len())))
}

fn fix_geometry(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, output) = (str_arg(args, "input"), str_arg(args, "output"));
    let mut layer = load_layer(ctx, input)?;
    let mut repaired = 0;
    for f in &mut layer.features {
        if !f.geometry.is_valid() {
            if let Geometry::Polygon(rings) = &f.geometry {
                let pts: Vec<[f64; 2]> = rings.iter().flatten().copied().collect();
                f.geometry = Geometry::Polygon(vec![convex_hull(&pts)]);
                repaired += 1;
            }
        }
    }
    save_layer(ctx, output, &layer)?;
    Ok(ToolOutput::new(format!("repaired {repaired} invalid geometries into {output}")))
}

fn check_geometry(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let input = str_arg(args, "input");
    let layer = load_layer(ctx, input)?;
    let invalid = layer.features.iter().filter(|f| !f.geometry.is_valid()).count();
    Ok(ToolOutput::new(format!(
        "{input}: {} features, {invalid} invalid, CRS {}",
        layer.features.len(),
        layer.crs
    )))
}

fn calculate_area(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, output) = (str_arg(args, "input"), str_arg(args, "output"));
    let field = match str_arg(args, "field") {
        "" => "area",
        f => f,
    };
    let mut layer = load_layer(ctx, input)?;
    require_projected(&layer, input, "area calculation")?;
    require_valid(&layer, input)?;
    let mut total = 0.0;
    for f in &mut layer.features {
        let a = f.geometry.area();
        total += a;
        f.properties.insert(field.to_owned(), serde_json::Value::from(a));
    }
    save_layer(ctx, output, &layer)?;
    Ok(ToolOutput::new(format!("total {field} {total:.3} over {} features", layer.features.len())))
}

fn zonal_summary(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (zones_path, points_path, output) = (str_arg(args, "zones"), str_arg(args, "points"), str_arg(args, "output"));
    let field = str_arg(args, "field");
    let mut zones = load_layer(ctx, zones_path)?;
    let points = load_layer(ctx, points_path)?;
    require_same_crs(&zones, &points)?;
    require_valid(&zones, zones_path)?;
    for zone in &mut zones.features {
        let inside: Vec<&Feature> = points.features.iter().filter(|p| zone.geometry.contains(p.geometry.centroid())).collect();
        zone.properties.insert("count".into(), serde_json::Value::from(inside.len()));
        if !field.is_empty() {
            let sum: f64 = inside.iter().filter_map(|p| p.properties.get(field).and_then(|v| v.as_f64())).sum();
            zone.properties.insert(format!("sum_{field}"), serde_json::Value::from(sum));
        }
    }
    save_layer(ctx, output, &zones)?;
    Ok(ToolOutput::new(format!("summarized {} zones into {output}", zones.features.len())))
}

fn render_map(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let paths = path_list(args, "layers");
    let output = str_arg(args, "output");
    if paths.is_empty() {
        return Err(ToolFailure::new("ValueError: invalid value for layers: no layers to draw", Some(ErrorCategory::BadParameter)));
    }
    let mut layers = Vec::with_capacity(paths.len());
    for p in &paths {
        let layer = load_layer(ctx, p)?;
        if let Some(first) = layers.first() {
            require_same_crs(first, &layer)?;
        }
        layers.push(layer);
    }
    let dim = |name: &str| args.get(name).and_then(ArgValue::as_f64).unwrap_or(256.0);
    let (width, height) = (dim("width"), dim("height"));
    if !(16.0..=4096.0).contains(&width) || !(16.0..=4096.0).contains(&height) {
        return Err(ToolFailure::raw(format!("ValueError: invalid value for map size {width}x{height}")));
    }
    let ramp = match str_arg(args, "color_ramp") {
        "" => "OrRd",
        r => r,
    };
    let style = MapStyle {
        color_ramp: ramp,
        alpha: args.get("alpha").and_then(ArgValue::as_f64).unwrap_or(0.8),
        width: width as u32,
        height: height as u32,
    };
    ctx.checkpoint()?;
    let img = render_layers(&layers, &style);
    ctx.write(output, &encode_png(&img))?;
    Ok(ToolOutput::new(format!("rendered {} layers into {output}", layers.len())))
}

fn sleep_tool(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let secs = args.get("seconds").and_then(ArgValue::as_f64).unwrap_or(0.0);
    if secs < 0.0 {
        return Err(ToolFailure::raw(format!("ValueError: invalid value for seconds: {secs}")));
    }
    ctx.sleep(secs)?;
    Ok(ToolOutput::new(format!("slept {secs} s")))
}

fn crash_after_declare(ctx: &ToolContext, args: &Args) -> Result<ToolOutput, ToolFailure> {
    let (input, output) = (str_arg(args, "input"), str_arg(args, "output"));
    let _ = ctx.read(input)?;
    let mut raw = String::from("Traceback (most recent call last):\n");
    for depth in 0..40 {
        raw.push_str(&format!(
            "  File \"/opt/geo/engine/stage_{depth}.py\", line {}, in run\n    return self.next.run(batch)\n",
            100 + depth
        ));
    }
    raw.push_str(&format!("RuntimeError: worker crashed while writing '{output}'\n"));
    Err(ToolFailure::raw(raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_registers() {
        let r = synthetic_registry();
        assert_eq!(r.len(), 13);
        assert!(r.lookup("render_map").unwrap().produces_map);
    }

    #[test]
    fn expressions() {
        assert_eq!(parse_expression("pop > 100").unwrap().1, Op::Gt);
        assert_eq!(parse_expression("pop>=100").unwrap().1, Op::Ge);
        let (f, op, v) = parse_expression("kind == 'school'").unwrap();
        assert_eq!((f.as_str(), op, v.as_str()), ("kind", Op::Eq, Some("school")));
        assert!(parse_expression("pop is big").is_none());
        assert!(parse_expression("> 3").is_none());
        assert!(compare(&serde_json::json!(150), Op::Gt, &serde_json::json!(100.0)));
        assert!(!compare(&serde_json::json!("a"), Op::Gt, &serde_json::json!(1)));
    }
}
