"""The main file of the runner which will install all requirements in
a virtual environment and then start the actual process.
"""

import os
import subprocess
import sys

script_directory = os.path.dirname(os.path.realpath(__file__))
os.chdir(script_directory)

# Install uv
subprocess.run([sys.executable, "-m", "pip", "install", "uv"], check=True)

# Create virtual environment
subprocess.run(["uv", "venv"], check=True)

# Install packages in the virtual environment
subprocess.run(["uv", "pip", "install", "."], check=True)

if os.name == "nt":
    venv_python = os.path.join(".venv", "Scripts", "python")
else:
    venv_python = os.path.join(".venv", "bin", "python")

command_args = [venv_python, "-m", "catpump"] + sys.argv[1:]

sys.exit(subprocess.run(command_args, check=False).returncode)
