//! Writes the canned playback files used by `fixtures/experiment.json`.
//!
//! ```text
//! cargo run -p sdlc-agents-core --example gen_playback -- fixtures/playback
//! ```
//!
//! Two mock models with different habits: `mock-a` writes compact code in
//! three files and rarely fails its own tests, `mock-b` splits code into
//! more files, needs one repair round for its Waterfall design, and reports
//! more failures. Output is fully determined by the fixed seeds below.

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sdlc_agents_core::gateway::{PlaybackEntry, PlaybackFile};
use sdlc_agents_core::{ProcessModel, RoleKind, Stage};
use serde_json::{json, Value};

struct Project {
    id: &'static str,
    name: &'static str,
    goals: [&'static str; 3],
    pool: [(&'static str, &'static str); 5],
    checks: [&'static str; 6],
    code: fn(&Style, u32) -> Vec<(String, String)>,
}

struct Style {
    label: &'static str,
    seed: u64,
    split: bool,
    fail_rate: f64,
    backlog: usize,
    latency: (f64, f64),
}

const STYLES: [Style; 2] = [
    Style { label: "mock-a", seed: 11, split: false, fail_rate: 0.15, backlog: 4, latency: (4.0, 18.0) },
    Style { label: "mock-b", seed: 29, split: true, fail_rate: 0.35, backlog: 5, latency: (9.0, 40.0) },
];

fn snake_code(style: &Style, sprint: u32) -> Vec<(String, String)> {
    let mut script = String::from(
        "const canvas = document.getElementById('board');
const ctx = canvas.getContext('2d');
const CELL = 20;
const COLS = canvas.width / CELL;
const ROWS = canvas.height / CELL;
let snake = [{ x: 5, y: 5 }];
let dir = { x: 1, y: 0 };
let food = spawnFood();
let score = 0;
let timer = null;

function spawnFood() {
  while (true) {
    const f = { x: Math.floor(Math.random() * COLS), y: Math.floor(Math.random() * ROWS) };
    if (!snake.some(s => s.x === f.x && s.y === f.y)) return f;
  }
}

function step() {
  const head = { x: snake[0].x + dir.x, y: snake[0].y + dir.y };
  if (head.x < 0 || head.y < 0 || head.x >= COLS || head.y >= ROWS) return gameOver();
  if (snake.some(s => s.x === head.x && s.y === head.y)) return gameOver();
  snake.unshift(head);
  if (head.x === food.x && head.y === food.y) {
    score += 10;
    food = spawnFood();
  } else {
    snake.pop();
  }
  draw();
}

function draw() {
  ctx.fillStyle = '#111';
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = '#4caf50';
  snake.forEach(s => ctx.fillRect(s.x * CELL, s.y * CELL, CELL - 1, CELL - 1));
  ctx.fillStyle = '#e91e63';
  ctx.fillRect(food.x * CELL, food.y * CELL, CELL - 1, CELL - 1);
  document.getElementById('score').textContent = score;
}

document.addEventListener('keydown', e => {
  const keys = { ArrowUp: [0, -1], ArrowDown: [0, 1], ArrowLeft: [-1, 0], ArrowRight: [1, 0] };
  const k = keys[e.key];
  if (k && (k[0] !== -dir.x || k[1] !== -dir.y)) dir = { x: k[0], y: k[1] };
});
",
    );
    if sprint != 1 {
        script.push_str(
            "
function gameOver() {
  clearInterval(timer);
  const best = Math.max(score, Number(localStorage.getItem('best') || 0));
  localStorage.setItem('best', best);
  document.getElementById('best').textContent = best;
}
",
        );
    } else {
        script.push_str("\nfunction gameOver() {\n  clearInterval(timer);\n}\n");
    }
    if sprint == 0 || sprint >= 3 {
        script.push_str(
            "
document.getElementById('pause').addEventListener('click', () => {
  if (timer) { clearInterval(timer); timer = null; } else { timer = setInterval(step, 120); }
});
",
        );
    }
    script.push_str(
        "
document.getElementById('start').addEventListener('click', () => {
  snake = [{ x: 5, y: 5 }];
  dir = { x: 1, y: 0 };
  score = 0;
  clearInterval(timer);
  timer = setInterval(step, 120);
});
",
    );
    let html = "<!DOCTYPE html>
<html lang=\"en\">
<head>
  <meta charset=\"UTF-8\">
  <title>Snake</title>
  <link rel=\"stylesheet\" href=\"style.css\">
</head>
<body>
  <main>
    <canvas id=\"board\" width=\"400\" height=\"400\"></canvas>
    <p>Score: <span id=\"score\">0</span> Best: <span id=\"best\">0</span></p>
    <button id=\"start\">Start</button>
    <button id=\"pause\">Pause</button>
  </main>
  <script src=\"script.js\"></script>
</body>
</html>
";
    let css = "body {
  background: #222;
  color: #eee;
  font-family: sans-serif;
  display: flex;
  justify-content: center;
}

canvas {
  border: 2px solid #555;
}
";
    let mut files = vec![("index.html".to_string(), html.to_string()), ("style.css".into(), css.into())];
    if style.split {
        files.push((
            "storage.js".into(),
            "export function loadBest() {\n  return Number(localStorage.getItem('best') || 0);\n}\n\nexport function saveBest(v) {\n  localStorage.setItem('best', String(v));\n}\n".into(),
        ));
    }
    files.push(("script.js".into(), script));
    files
}

fn expense_code(style: &Style, sprint: u32) -> Vec<(String, String)> {
    let mut script = String::from(
        "const CATEGORIES = ['Food', 'Transportation', 'Hotel'];
let expenses = JSON.parse(localStorage.getItem('expenses') || '[]');
let editing = null;

function save() {
  localStorage.setItem('expenses', JSON.stringify(expenses));
}

function addExpense(amount, category, date, description) {
  if (!(amount > 0) || !CATEGORIES.includes(category) || !date) return false;
  expenses.push({ id: Date.now(), amount, category, date, description });
  save();
  render();
  return true;
}

function render() {
  const list = document.getElementById('history');
  list.innerHTML = '';
  expenses.forEach(e => {
    const li = document.createElement('li');
    li.textContent = `${e.date} ${e.category} ${e.amount.toFixed(2)} ${e.description}`;
    list.appendChild(li);
  });
  renderSummary();
}

function renderSummary() {
  const totals = Object.fromEntries(CATEGORIES.map(c => [c, 0]));
  expenses.forEach(e => { totals[e.category] += e.amount; });
  const all = Object.values(totals).reduce((a, b) => a + b, 0);
  document.getElementById('summary').textContent =
    CATEGORIES.map(c => `${c}: ${totals[c].toFixed(2)}`).join(' | ') + ` | Total: ${all.toFixed(2)}`;
}

document.getElementById('form').addEventListener('submit', ev => {
  ev.preventDefault();
  const f = ev.target;
  addExpense(parseFloat(f.amount.value), f.category.value, f.date.value, f.description.value);
  f.reset();
});
",
    );
    if sprint == 0 || sprint >= 2 {
        script.push_str(
            "
function deleteExpense(id) {
  expenses = expenses.filter(e => e.id !== id);
  save();
  render();
}

function editExpense(id, changes) {
  const e = expenses.find(x => x.id === id);
  if (!e) return;
  Object.assign(e, changes);
  save();
  render();
}
",
        );
    }
    script.push_str("\nrender();\n");
    let html = "<!DOCTYPE html>
<html lang=\"en\">
<head>
  <meta charset=\"UTF-8\">
  <meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">
  <title>Expense Tracker</title>
  <link rel=\"stylesheet\" href=\"style.css\">
</head>
<body>
  <form id=\"form\">
    <input name=\"amount\" type=\"number\" step=\"0.01\" required>
    <select name=\"category\">
      <option>Food</option>
      <option>Transportation</option>
      <option>Hotel</option>
    </select>
    <input name=\"date\" type=\"date\" required>
    <input name=\"description\" type=\"text\">
    <button type=\"submit\">Add</button>
  </form>
  <p id=\"summary\"></p>
  <ul id=\"history\"></ul>
  <script src=\"script.js\"></script>
</body>
</html>
";
    let css = "body {
  font-family: sans-serif;
  max-width: 720px;
  margin: 0 auto;
  padding: 1rem;
}

form {
  display: flex;
  flex-wrap: wrap;
  gap: 0.5rem;
}

@media (max-width: 480px) {
  form { flex-direction: column; }
}
";
    let mut files = vec![("index.html".to_string(), html.to_string()), ("style.css".into(), css.into())];
    if style.split {
        files.push((
            "validation.js".into(),
            "export function validAmount(v) {\n  return Number.isFinite(v) && v > 0;\n}\n\nexport function validDate(s) {\n  return !Number.isNaN(Date.parse(s));\n}\n".into(),
        ));
    }
    files.push(("script.js".into(), script));
    files
}

const PROJECTS: [Project; 2] = [
    Project {
        id: "snake-game",
        name: "Snake Game",
        goals: ["Responsive keyboard control", "Clear score feedback", "Replayable short sessions"],
        pool: [
            ("P0", "Snake moves on a grid and is steered with the arrow keys"),
            ("P0", "Eating food grows the snake and adds to the score"),
            ("P1", "Collision with a wall or the snake ends the game"),
            ("P1", "Best score is kept between sessions"),
            ("P2", "Pause and resume control"),
        ],
        checks: ["arrow keys steer", "food grows snake", "wall collision ends game", "self collision ends game", "best score persists", "pause toggles"],
        code: snake_code,
    },
    Project {
        id: "expense-tracker",
        name: "Expense Tracker",
        goals: ["Fast expense entry", "Accurate category totals", "Usable on phones"],
        pool: [
            ("P0", "Add an expense with amount, category, date and description"),
            ("P0", "Show expense history"),
            ("P1", "Totals per category and overall"),
            ("P1", "Edit and delete expenses"),
            ("P2", "Responsive layout for mobile"),
        ],
        checks: ["add valid expense", "reject negative amount", "history lists entries", "category totals", "edit expense", "delete expense"],
        code: expense_code,
    },
];

fn fenced(files: &[(String, String)]) -> String {
    let mut out = String::from("Here is the complete implementation.\n\n");
    for (path, body) in files {
        let (lang, header) = match path.rsplit('.').next() {
            Some("html") => ("html", format!("<!-- {path} -->")),
            Some("css") => ("css", format!("/* {path} */")),
            _ => ("javascript", format!("// {path}")),
        };
        out.push_str(&format!("```{lang}\n{header}\n{body}```\n\n"));
    }
    out
}

fn prd(p: &Project, s: &Style) -> Value {
    let pool: Vec<Value> = p.pool[..s.backlog].iter().map(|(pr, r)| json!({"priority": pr, "requirement": r})).collect();
    json!({
        "Language": "English",
        "Programming Language": "HTML, CSS, and JavaScript",
        "Original Requirements": format!("Build the {} as a browser application.", p.name),
        "Project Name": p.name,
        "Product Goals": p.goals,
        "User Stories": p.pool[..s.backlog].iter().map(|(_, r)| format!("As a user, I want: {r}")).collect::<Vec<_>>(),
        "Competitive Quadrant Chart": "Simple, free and offline compared with feature-heavy alternatives.",
        "Requirement Analysis": "All features run client-side; persistence uses localStorage.",
        "Requirement Pool": pool,
        "UI Design draft": "Single page with the main view on top and controls below."
    })
}

fn design(p: &Project, sprint: u32) -> Value {
    json!({
        "architecture_description": format!("Single-page {} with a render loop and event handlers.", p.name),
        "class_diagram": "classDiagram\n  class App\n  class Store\n  App --> Store",
        "data_flow": "User input updates state, state changes trigger a re-render and a save.",
        "ui_design": "Main view, status line and buttons.",
        "state_management": "Module-level state object persisted to localStorage.",
        "requirements_mapping": p.pool.iter().map(|(_, r)| r.to_string()).collect::<Vec<_>>(),
        "revision": sprint
    })
}

fn plan(p: &Project, level: &str) -> Value {
    json!({
        "test_cases": p.checks.iter().map(|c| json!({"name": c, "expected": "behaves as specified"})).collect::<Vec<_>>(),
        "requirements_coverage": p.pool.iter().map(|(_, r)| r.to_string()).collect::<Vec<_>>(),
        "pass_criteria": format!("All {level} cases pass"),
        "test_environment": "Desktop and mobile browser",
        "test_data": "Generated inputs"
    })
}

fn report(p: &Project, rng: &mut StdRng, rate: f64, forced: &[usize]) -> Value {
    let cases: Vec<Value> = p
        .checks
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let fail = forced.contains(&i) || (forced.is_empty() && rng.gen_bool(rate));
            json!({"name": c, "verdict": if fail { "FAIL" } else { "PASS" }, "details": if fail { "did not meet expected result" } else { "ok" }})
        })
        .collect();
    json!({"cases": cases})
}

struct Out<'a> {
    entries: Vec<PlaybackEntry>,
    rng: StdRng,
    style: &'a Style,
    project: &'a str,
}

impl Out<'_> {
    fn push(&mut self, process: ProcessModel, role: RoleKind, stage: Stage, sprint: Option<u32>, attempt: u32, text: String) {
        let (lo, hi) = self.style.latency;
        let latency = (self.rng.gen_range(lo..hi) * 1000.0).round() / 1000.0;
        self.entries.push(PlaybackEntry {
            project: self.project.to_string(),
            process,
            role,
            phase: stage,
            sprint,
            attempt,
            text,
            prompt_tokens: None,
            completion_tokens: None,
            latency: Some(latency),
        });
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json")
}

fn generate(style: &Style) -> PlaybackFile {
    let mut entries = Vec::new();
    for (pi, p) in PROJECTS.iter().enumerate() {
        let mut o = Out { entries: Vec::new(), rng: StdRng::seed_from_u64(style.seed * 100 + pi as u64), style, project: p.id };
        let code = |sprint| fenced(&(p.code)(style, sprint));

        // Waterfall.
        let w = ProcessModel::Waterfall;
        o.push(w, RoleKind::ProjectManager, Stage::Requirements, None, 0, pretty(&prd(p, style)));
        if style.split {
            o.push(w, RoleKind::Designer, Stage::Design, None, 0, "The design follows a layered approach; details to be confirmed.".into());
            o.push(w, RoleKind::Designer, Stage::Design, None, 1, pretty(&design(p, 0)));
        } else {
            o.push(w, RoleKind::Designer, Stage::Design, None, 0, pretty(&design(p, 0)));
        }
        o.push(w, RoleKind::Developer, Stage::Implementation, None, 0, code(0));
        for (role, stage) in [
            (RoleKind::UnitTestExecutor, Stage::UnitTesting),
            (RoleKind::IntegrationTestExecutor, Stage::IntegrationTesting),
            (RoleKind::AcceptanceTestExecutor, Stage::AcceptanceTesting),
        ] {
            let r = report(p, &mut o.rng, style.fail_rate, &[]);
            o.push(w, role, stage, None, 0, pretty(&r));
        }
        o.push(w, RoleKind::Deployer, Stage::Deployment, None, 0, pretty(&json!({"steps": ["Copy files to a static host", "Open index.html"], "notes": "No build step."})));

        // V-Model.
        let v = ProcessModel::VModel;
        o.push(v, RoleKind::ProjectManager, Stage::Requirements, None, 0, format!("```json\n{}\n```", pretty(&prd(p, style))));
        o.push(v, RoleKind::AcceptanceTestExecutor, Stage::Requirements, None, 0, pretty(&plan(p, "acceptance")));
        o.push(v, RoleKind::Designer, Stage::Design, None, 0, pretty(&design(p, 0)));
        o.push(v, RoleKind::IntegrationTestExecutor, Stage::Design, None, 0, pretty(&plan(p, "integration")));
        o.push(v, RoleKind::Developer, Stage::Implementation, None, 0, code(0));
        o.push(v, RoleKind::UnitTestExecutor, Stage::Implementation, None, 0, pretty(&plan(p, "unit")));
        for (role, stage) in [
            (RoleKind::UnitTestExecutor, Stage::UnitTesting),
            (RoleKind::IntegrationTestExecutor, Stage::IntegrationTesting),
            (RoleKind::AcceptanceTestExecutor, Stage::AcceptanceTesting),
        ] {
            let r = report(p, &mut o.rng, style.fail_rate, &[]);
            o.push(v, role, stage, None, 0, pretty(&r));
        }

        // Agile: sprint 1 always fails two cases so the carry-over path runs.
        let a = ProcessModel::Agile;
        o.push(a, RoleKind::ProjectManager, Stage::Requirements, Some(0), 0, pretty(&prd(p, style)));
        for sprint in 1..=3 {
            let s = Some(sprint);
            o.push(a, RoleKind::SprintManager, Stage::SprintPlanning, s, 0, pretty(&json!({
                "sprint_goal": format!("Deliver increment {sprint}"),
                "selected_requirements": [],
                "carry_over_fixes": [],
                "tasks": ["design", "implement", "test", "deploy"],
                "definition_of_done": "All selected cases pass"
            })));
            o.push(a, RoleKind::Designer, Stage::Design, s, 0, pretty(&design(p, sprint)));
            o.push(a, RoleKind::Developer, Stage::Implementation, s, 0, code(sprint));
            let r = match (sprint, style.split) {
                (1, _) => report(p, &mut o.rng, 0.0, &[1, 4]),
                (2, false) => report(p, &mut o.rng, 0.0, &[]),
                (2, true) => report(p, &mut o.rng, 0.0, &[5]),
                _ => report(p, &mut o.rng, style.fail_rate, &[]),
            };
            o.push(a, RoleKind::Tester, Stage::Testing, s, 0, pretty(&r));
            o.push(a, RoleKind::Deployer, Stage::Deployment, s, 0, pretty(&json!({"release": format!("v0.{sprint}"), "steps": ["Publish static files"]})));
        }
        entries.extend(o.entries);
    }
    PlaybackFile { entries }
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures/playback".into()));
    std::fs::create_dir_all(&dir)?;
    for style in &STYLES {
        let mut bytes = serde_json::to_vec_pretty(&generate(style))?;
        bytes.push(b'\n');
        let path = dir.join(format!("{}.json", style.label));
        std::fs::write(&path, bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
