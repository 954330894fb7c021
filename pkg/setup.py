#!/usr/bin/env python3
# setup.py - Bootstrap a coopradio checkout: venv, requirements, .env, run directories

import argparse
import os
import platform
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
VENV = ROOT / 'venv'
MIN_PYTHON = (3, 9)
DIRECTORY_KEYS = ('COOPRADIO_OUTPUT_DIR', 'COOPRADIO_LOG_DIR')
DIRECTORY_DEFAULTS = {'COOPRADIO_OUTPUT_DIR': 'outputs', 'COOPRADIO_LOG_DIR': 'logs'}


def venv_executable(name: str) -> Path:
    if os.name == 'nt':
        return VENV / 'Scripts' / f"{name}.exe"
    return VENV / 'bin' / name


def read_env_file(path: Path) -> dict:
    """KEY=value pairs of a dotenv file; comments and blank lines skipped."""
    values = {}
    if not path.exists():
        return values
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith('#') or '=' not in line:
            continue
        key, value = line.split('=', 1)
        values[key.strip()] = value.strip()
    return values


def check_python_version():
    if sys.version_info < MIN_PYTHON:
        print(f"❌ Python {MIN_PYTHON[0]}.{MIN_PYTHON[1]} or higher is required (found {sys.version.split()[0]})")
        sys.exit(1)
    print(f"✅ Python version: {sys.version.split()[0]}")


def ensure_venv():
    if VENV.exists():
        print("✅ Virtual environment already exists")
        return
    print("📦 Creating virtual environment...")
    subprocess.run([sys.executable, '-m', 'venv', str(VENV)], check=True)
    print("✅ Virtual environment created")


def install_requirements():
    print("📥 Installing requirements...")
    python = venv_executable('python')
    subprocess.run([str(python), '-m', 'pip', 'install', '--upgrade', 'pip'], check=True)
    subprocess.run([str(python), '-m', 'pip', 'install', '-r', str(ROOT / 'requirements.txt')], check=True)
    print("✅ Requirements installed")


def ensure_env_file() -> dict:
    """Copy .env.example to .env once; returns the settings the run directories come from."""
    env_path = ROOT / '.env'
    example = ROOT / '.env.example'
    if env_path.exists():
        print("✅ .env already present, leaving it untouched")
    elif example.exists():
        env_path.write_text(example.read_text())
        print("✅ Created .env from .env.example")
    else:
        env_path.write_text(''.join(f"{k}={v}\n" for k, v in DIRECTORY_DEFAULTS.items()))
        print("⚠️  .env.example missing, wrote a minimal .env")
    return {**DIRECTORY_DEFAULTS, **read_env_file(env_path)}


def create_run_directories(env: dict):
    for key in DIRECTORY_KEYS:
        directory = ROOT / env[key]
        directory.mkdir(parents=True, exist_ok=True)
        print(f"✅ {key}: {directory}")


def smoke_check() -> bool:
    """Stability threshold of the two-SU reference instance; should print 0.8."""
    print("🔎 Running a stability check on the two_su reference instance...")
    result = subprocess.run([str(venv_executable('python')), str(ROOT / 'main.py'), 'stability',
                             '--params', 'two_su', '--log-level', 'WARNING'],
                            cwd=ROOT, capture_output=True, text=True)
    print(result.stdout.strip())
    if result.returncode != 0:
        print(f"❌ Smoke check exited with code {result.returncode}")
        print(result.stderr.strip())
        return False
    return True


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Bootstrap a coopradio checkout')
    parser.add_argument('--skip-install', action='store_true', help='Do not touch the venv or requirements')
    parser.add_argument('--no-check', action='store_true', help='Skip the post-install smoke check')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    print("🚀 coopradio setup")
    print("=" * 40)
    print(f"Platform: {platform.system()} {platform.release()}")

    try:
        check_python_version()
        if not args.skip_install:
            ensure_venv()
            install_requirements()
        create_run_directories(ensure_env_file())
        if not (args.skip_install or args.no_check) and not smoke_check():
            sys.exit(1)
    except subprocess.CalledProcessError as e:
        print(f"❌ {' '.join(map(str, e.cmd))} failed with code {e.returncode}")
        sys.exit(1)

    activate = r"venv\Scripts\activate" if os.name == 'nt' else "source venv/bin/activate"
    print("\n" + "=" * 40)
    print("🎉 Setup complete. Next steps:")
    print(f"   {activate}")
    print("   python main.py solve --params two_su")
    print("   pytest -m 'not slow'")


if __name__ == "__main__":
    main()
