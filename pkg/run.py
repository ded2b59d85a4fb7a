#!/usr/bin/env python3
"""
Development runner script for the ST-LGSL Traffic Forecaster
"""

import subprocess
import sys
from pathlib import Path


def check_requirements():
    """Check if all requirements are installed"""
    import importlib.util

    required_packages = [
        "numpy",
        "pandas",
        "pydantic_settings",
        "structlog",
        "typer",
    ]
    missing_packages = []

    for package in required_packages:
        if importlib.util.find_spec(package) is None:
            missing_packages.append(package)

    if missing_packages:
        print(f"❌ Missing packages: {', '.join(missing_packages)}")
        print("Run: pip install -r requirements.txt")
        return False
    else:
        print("✅ All required packages are installed")
        return True


def check_environment():
    """Check environment configuration"""
    env_file = Path(".env")
    if not env_file.exists():
        print("⚠️  .env file not found, using STLGSL_* defaults")
    else:
        print("✅ Environment file found")

    config_file = Path("configs/example.json")
    if not config_file.exists():
        print("❌ configs/example.json not found")
        return False

    print("✅ Example run config found")
    return True


def run_demo():
    """Synthesize the planted dataset and train the example config"""
    print("🚦 Synthesizing planted dataset...")
    subprocess.run(["stlgsl", "synth", "--seed", "7", "--out", "data/synthetic"], check=True)
    print("🏋️ Training example config...")
    try:
        subprocess.run(["stlgsl", "train", "--config", "configs/example.json"], check=True)
    except KeyboardInterrupt:
        print("\n👋 Training stopped")


def run_tests(slow: bool = False):
    """Run the test suite"""
    print("🧪 Running tests...")
    marker = "slow" if slow else "not slow"
    result = subprocess.run(["pytest", "-v", "-m", marker, "--cov=stlgsl"])
    sys.exit(result.returncode)


def main():
    """Main entry point"""
    if len(sys.argv) > 1:
        command = sys.argv[1]

        if command == "test":
            run_tests()
            return
        elif command == "slow":
            run_tests(slow=True)
            return
        elif command == "check":
            print("🔍 Checking system requirements...")
            all_good = True
            all_good &= check_requirements()
            all_good &= check_environment()

            if all_good:
                print("\n✅ All checks passed! Ready to run.")
            else:
                print("\n❌ Some checks failed. Please fix the issues above.")
            return
        elif command == "help":
            print("ST-LGSL Traffic Forecaster - Development Commands")
            print("")
            print("python run.py           - Synthesize data and train the example config")
            print("python run.py check     - Check system requirements")
            print("python run.py test      - Run the fast test suite")
            print("python run.py slow      - Run the desk-scale acceptance runs")
            print("python run.py help      - Show this help")
            return

    # Default: demo run
    print("🔍 Checking system...")
    if not check_requirements():
        return
    if not check_environment():
        return

    run_demo()


if __name__ == "__main__":
    main()
