use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use vinst::{parse_clip, AppState};
use vinst_core::image::{write_image, Image};
use vinst_core::render::{render_frame, RenderMode};
use vinst_core::scene::{
    load_cube_tiles, load_scene, load_square_tiles, load_tile_set, RecipeFile, TileKind,
};
use vinst_core::wang::{generate_recipe_2d, generate_recipe_3d};

#[derive(Parser)]
#[command(name = "vinst", version, about = "Render virtually instanced molecular scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render one frame to a portable-pixmap file.
    Render {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        #[arg(long)]
        time: Option<f64>,
        /// Clipping plane as nx,ny,nz,offset; the side the normal points to stays visible.
        #[arg(long, allow_hyphen_values = true)]
        clip: Option<String>,
        /// Visit replication-area tiles one by one instead of through the replication grid.
        #[arg(long)]
        no_replas: bool,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Print virtual atom count, structure sizes, prism count and grid dimensions.
    Stats {
        scene: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Generate a tiling recipe for a tile set.
    RecipeGen {
        tileset: PathBuf,
        /// WxH for square tiles, WxHxD for cube tiles.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check recipe adjacency, prism soundness and hierarchy bounds.
    Validate { scene: PathBuf },
    /// Serve frames over HTTP and WebSocket.
    Serve {
        scene: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Directory of viewer assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Shell,
    Core,
    Both,
}

impl From<Mode> for RenderMode {
    fn from(m: Mode) -> RenderMode {
        match m {
            Mode::Shell => RenderMode::Shell,
            Mode::Core => RenderMode::Core,
            Mode::Both => RenderMode::Both,
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<u32>> {
    let dims = s
        .split('x')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("bad dims {s:?}"))?;
    if !(2..=3).contains(&dims.len()) || dims.contains(&0) {
        bail!("dims must be WxH or WxHxD with positive entries, got {s:?}");
    }
    Ok(dims)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Render {
            scene,
            output,
            width,
            height,
            time,
            clip,
            no_replas,
            mode,
        } => {
            let scene = load_scene(&scene)?;
            let mut camera = scene.camera;
            camera.width = width.unwrap_or(camera.width);
            camera.height = height.unwrap_or(camera.height);
            if !camera.is_valid() {
                bail!("invalid camera {camera:?}");
            }
            let mut config = scene.config;
            if let Some(t) = time {
                config.time = t;
            }
            if let Some(c) = clip {
                config.clip = parse_clip(&c).map_err(anyhow::Error::msg)?;
            }
            if no_replas {
                config.use_rep_las = false;
            }
            if let Some(m) = mode {
                config.mode = m.into();
            }
            let fb = render_frame(&scene, &camera, &config);
            write_image(&Image::from_framebuffer(&fb), &output)
                .with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Stats { scene, json } => {
            let report = load_scene(&scene)?.report();
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{report}");
            }
        }
        Command::RecipeGen {
            tileset,
            dims,
            seed,
            output,
        } => {
            let dims = parse_dims(&dims)?;
            let (kind, _, _) = load_tile_set(&tileset, usize::MAX)?;
            let file = match (kind, dims.as_slice()) {
                (TileKind::Square, &[w, h]) => {
                    let set = load_square_tiles(&tileset, usize::MAX)?;
                    RecipeFile::from_2d(&generate_recipe_2d(&set.tiles, (w, h), seed)?)
                }
                (TileKind::Cube, &[w, h, d]) => {
                    let set = load_cube_tiles(&tileset, usize::MAX)?;
                    RecipeFile::from_3d(&generate_recipe_3d(&set.tiles, (w, h, d), seed)?)
                }
                (TileKind::Square, _) => bail!("square tiles need WxH dims"),
                (TileKind::Cube, _) => bail!("cube tiles need WxHxD dims"),
            };
            std::fs::write(&output, file.to_toml()).with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Validate { scene } => {
            let problems = load_scene(&scene)?.validate();
            if !problems.is_empty() {
                for p in &problems {
                    println!("{p}");
                }
                eprintln!("{} problem(s) in {}", problems.len(), scene.display());
                return Ok(ExitCode::from(1));
            }
            println!("ok");
        }
        Command::Serve {
            scene,
            port,
            host,
            static_dir,
        } => {
            let state = AppState::new(load_scene(&scene)?, static_dir);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(vinst::serve(state, (host, port).into()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        // Help and version exit 0, usage errors exit 2.
        Err(e) => e.exit(),
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
