import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config import CONFIGS_DIR
from app.control.scenarios import dump_run_config, load_run_config, preset, preset_names, run_config_schema


def main():
    CONFIGS_DIR.mkdir(parents=True, exist_ok=True)

    for name in preset_names():
        path = CONFIGS_DIR / f"{name}.json"
        text = dump_run_config(preset(name))
        path.write_text(text + "\n", encoding="utf-8")

        # re-read through the validating loader so a bad dump fails here
        load_run_config(path)
        print(f"{name}: {path}")

    schema = CONFIGS_DIR / "run_config.schema.json"
    schema.write_text(run_config_schema() + "\n", encoding="utf-8")
    print(f"Schema: {schema}")


if __name__ == "__main__":
    main()
