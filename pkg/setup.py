from setuptools import setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh
                    if line.strip() and not line.startswith(("#", "pytest"))]

setup(
    name="d2d-trajectory-planner",
    version="0.1.0",
    description="Trajectory planning for mobile users on a device-to-device link: "
                "offline convex solver, MPC baseline and online gradient planner",
    long_description=long_description,
    long_description_content_type="text/markdown",
    py_modules=[
        "settings",
        "exceptions",
        "models",
        "geometry",
        "rate_model",
        "projections",
        "offline_solver",
        "mpc",
        "online_ogd",
        "regret",
        "peers",
        "scenario_io",
        "simulator",
        "reports",
        "charts",
        "run",
    ],
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Scientific/Engineering",
    ],
    python_requires=">=3.9",
    install_requires=requirements,
    extras_require={
        "dev": ["pytest==7.4.0"],
    },
    entry_points={
        "console_scripts": [
            "d2d-planner=run:main",
        ],
    },
    include_package_data=True,
    data_files=[("presets", ["presets/fig1.env", "presets/fig3.env",
                             "presets/fig4.env", "presets/fig5.env"])],
)
