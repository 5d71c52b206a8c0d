//! Storyboard documents: six scenes in a 3×2 grid with their narrations.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{Scene, StoryProject};

pub const GRID_COLUMNS: usize = 3;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unknown export format `{name}` (available: {available})")]
    UnknownFormat { name: String, available: String },
    #[error("project has not been generated yet")]
    NotGenerated,
}

pub trait Exporter: Send + Sync {
    fn name(&self) -> &'static str;
    fn media_type(&self) -> &'static str;
    /// `asset_base` is prefixed to image handles, e.g. `assets/`.
    fn export(&self, project: &StoryProject, asset_base: &str) -> String;
}

fn title(project: &StoryProject) -> String {
    let seed = project.seed.text.trim();
    let first = seed.lines().next().unwrap_or(seed);
    if first.chars().count() > 80 {
        format!("{}…", first.chars().take(80).collect::<String>())
    } else {
        first.to_string()
    }
}

fn rows(project: &StoryProject) -> Vec<&[Scene]> {
    project.scenes.chunks(GRID_COLUMNS).collect()
}

fn md_cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

pub struct MarkdownExporter;

impl Exporter for MarkdownExporter {
    fn name(&self) -> &'static str {
        "markdown"
    }

    fn media_type(&self) -> &'static str {
        "text/markdown; charset=utf-8"
    }

    fn export(&self, project: &StoryProject, asset_base: &str) -> String {
        let mut out = format!("# {}\n\n", md_cell(&title(project)));
        if let Some(s) = &project.storyline {
            out.push_str(&s.text);
            out.push_str("\n\n");
            if !s.tones.is_empty() {
                let tones: Vec<&str> = s.tones.iter().map(|t| t.as_str()).collect();
                out.push_str(&format!("_Tones: {}_\n\n", tones.join(", ")));
            }
        }
        out.push_str("| | | |\n|---|---|---|\n");
        for row in rows(project) {
            let cells: Vec<String> = row
                .iter()
                .map(|s| {
                    let image = match &s.image {
                        Some(img) => format!("![Scene {}]({asset_base}{})<br>", s.index, img.handle),
                        None => String::new(),
                    };
                    let stale = if s.stale { " (stale)" } else { "" };
                    format!("**Scene {}**{stale}<br>{image}{}", s.index, md_cell(&s.narration))
                })
                .collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

pub struct HtmlExporter;

impl Exporter for HtmlExporter {
    fn name(&self) -> &'static str {
        "html"
    }

    fn media_type(&self) -> &'static str {
        "text/html; charset=utf-8"
    }

    fn export(&self, project: &StoryProject, asset_base: &str) -> String {
        let t = esc(&title(project));
        let mut out = format!(
            "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{t}</title>\n<style>\n\
             .storyboard {{ display: grid; grid-template-columns: repeat({GRID_COLUMNS}, 1fr); gap: 1rem; }}\n\
             .scene img {{ width: 100%; }}\n\
             .stale {{ opacity: 0.6; }}\n\
             </style>\n</head>\n<body>\n<h1>{t}</h1>\n"
        );
        if let Some(s) = &project.storyline {
            out.push_str(&format!("<p class=\"storyline\">{}</p>\n", esc(&s.text)));
        }
        out.push_str("<div class=\"storyboard\">\n");
        for s in &project.scenes {
            let class = if s.stale { "scene stale" } else { "scene" };
            out.push_str(&format!("<figure class=\"{class}\" data-scene=\"{}\">\n", s.index));
            if let Some(img) = &s.image {
                out.push_str(&format!(
                    "<img src=\"{}{}\" alt=\"Scene {}\">\n",
                    esc(asset_base),
                    esc(&img.handle),
                    s.index
                ));
            }
            out.push_str(&format!(
                "<figcaption><strong>Scene {}</strong> {}</figcaption>\n</figure>\n",
                s.index,
                esc(&s.narration)
            ));
        }
        out.push_str("</div>\n</body>\n</html>\n");
        out
    }
}

pub struct ExporterRegistry {
    exporters: BTreeMap<&'static str, Box<dyn Exporter>>,
}

impl ExporterRegistry {
    pub fn empty() -> Self {
        Self {
            exporters: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(MarkdownExporter));
        r.register(Box::new(HtmlExporter));
        r
    }

    pub fn register(&mut self, exporter: Box<dyn Exporter>) {
        self.exporters.insert(exporter.name(), exporter);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.exporters.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Exporter, ExportError> {
        self.exporters
            .get(name)
            .map(|e| e.as_ref())
            .ok_or_else(|| ExportError::UnknownFormat {
                name: name.to_string(),
                available: self.names().collect::<Vec<_>>().join(", "),
            })
    }

    pub fn export(&self, name: &str, project: &StoryProject, asset_base: &str) -> Result<String, ExportError> {
        if project.scenes.is_empty() {
            return Err(ExportError::NotGenerated);
        }
        Ok(self.get(name)?.export(project, asset_base))
    }
}

impl Default for ExporterRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}
