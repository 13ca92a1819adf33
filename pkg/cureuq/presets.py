"""Именованные наборы значений: эталонные параметры смолы, неопределённости,
путь отверждения и настольные пресеты тестов покрытия."""

from cureuq.schemas.materials import (
    ConductivityParams,
    CuringKineticsParams,
    GlassTransitionParams,
    HeatCapacityParams,
    MaterialParameters,
    ShrinkageParams,
)

REFERENCE_VALUES = {
    "r_f": 0.44103,
    "theta_g0": -41.895966,
    "theta_g1": 140.3569,
    "a_pre": 5.01265e7,
    "e_act": 76594.406,
    "g_fac": 0.3517027,
    "n_exp": 1.4075975,
    "b_d": 4.83759159,
    "alpha_theta": 7.5878502e-4,
    "alpha_c": 5.413657e-2,
    "alpha_theta_c": 2.462367e-4,
    "alpha_theta_g": 6.96241016e-4,
    "a1": 1520.39194,
    "a2": 3.18668457,
    "a3": 291.465105,
    "a4": -1.0017558,
    "a5": 0.06688759,
    "b1": 0.18581859821,
    "b2": 0.27102864,
    "b3": 0.0215493632,
    "b4": 0.1949983,
}

# Среднее по Монте-Карло там, где оно отличается от МНК
REFERENCE_MC_VALUES = {"b_d": 9.629217}

# Стандартные отклонения: только шум (nls) и с распространением (fosm, mc)
REFERENCE_UNCERTAINTY = {
    "nls": {
        "r_f": 6.73143e-2,
        "theta_g0": 5.467009,
        "theta_g1": 6.7760428,
        "a_pre": 5.2535796e6,
        "e_act": 334.195649,
        "g_fac": 5.188022e-3,
        "n_exp": 1.50257429e-2,
        "b_d": 0.4061173,
        "alpha_theta": 2.55511e-6,
        "alpha_c": 2.07520867e-3,
        "alpha_theta_c": 2.11128e-5,
        "alpha_theta_g": 8.8562847e-6,
        "a1": 0.325381325,
        "a2": 3.515992e-3,
        "a3": 0.3821120625,
        "a4": 3.69965675e-3,
        "a5": 4.33834523e-4,
        "b1": 2.5950249e-3,
        "b2": 4.80503852e-3,
        "b3": 2.9388861e-3,
        "b4": 1.828861e-2,
    },
    "fosm": {
        "b_d": 2.3727446,
        "alpha_c": 2.07712342e-3,
        "alpha_theta_c": 2.1338366e-5,
        "alpha_theta_g": 1.9888972e-5,
        "a1": 11.69448254,
        "a2": 0.119997747,
        "a3": 2.13707337,
        "a4": 0.10754699,
        "a5": 0.0216347325,
        "b1": 3.2863376e-3,
        "b2": 6.9033889e-3,
        "b3": 8.718403e-3,
        "b4": 5.5583254e-2,
    },
    "mc": {
        "b_d": 5.013985,
        "alpha_c": 2.078666e-3,
        "alpha_theta_c": 2.13525e-5,
        "alpha_theta_g": 1.14387e-5,
        "a1": 12.0666,
        "a2": 0.123131,
        "a3": 5.570925,
        "a4": 0.104016,
        "a5": 0.014236,
        "b1": 3.51397e-3,
        "b2": 5.35149e-3,
        "b3": 3.04465e-3,
        "b4": 1.86872e-2,
    },
}

RHO_EPOXY = 1150.0

CURING_PATH_TEMPS = [20.0, 60.0, 60.0, 120.0, 120.0, 20.0, 20.0]
CURING_PATH_HOLDS = [8 * 3600.0, 4 * 3600.0, 2 * 3600.0]

KINETICS_TEMPERATURES = [80.0, 100.0, 110.0, 120.0, 130.0]
KINETICS_INTERVALS = [(0.2, 0.79), (0.15, 0.9), (0.1, 0.95), (0.1, 0.96), (0.1, 0.98)]
CP_CURES = [0.0, 0.52, 1.0]
CP_RANGE = (-75.0, 240.0)

# Степени отверждения образцов для температуры стеклования: c = lo + (hi − lo)·s^p
GLASS_CURE_RANGE = (0.18, 0.94)
GLASS_CURE_SPACING = 0.9


def reference_material() -> MaterialParameters:
    v = REFERENCE_VALUES
    return MaterialParameters(
        glass_transition=GlassTransitionParams(
            **{k: v[k] for k in GlassTransitionParams.free}
        ),
        kinetics=CuringKineticsParams(**{k: v[k] for k in CuringKineticsParams.free}),
        shrinkage=ShrinkageParams(**{k: v[k] for k in ShrinkageParams.free}),
        heat_capacity=HeatCapacityParams(**{k: v[k] for k in HeatCapacityParams.free}),
        conductivity=ConductivityParams(**{k: v[k] for k in ConductivityParams.free}),
    )


def kinetics_file(theta: float) -> str:
    return f"kinetics_{int(round(theta)):03d}C.csv"


def default_pipeline_steps(init_factor: float = 1.05) -> list[dict]:
    """Шаги калибровки по схеме зависимостей по умолчанию."""

    def init(*names):
        return {n: REFERENCE_VALUES[n] * init_factor for n in names}

    kinetics_files = [kinetics_file(t) for t in KINETICS_TEMPERATURES]
    return [
        {
            "id": "glass_transition",
            "model": "glass_transition",
            "free": ["r_f", "theta_g0", "theta_g1"],
            "dataset": {"files": ["glass_transition.csv"]},
            "init": init("r_f", "theta_g0", "theta_g1"),
        },
        {
            "id": "kinetics_chemical",
            "model": "kinetics_chemical",
            "free": ["a_pre", "e_act", "g_fac", "n_exp"],
            "dataset": {"files": kinetics_files, "split": {"part": "chemical"}},
            "init": init("a_pre", "e_act", "g_fac", "n_exp"),
            "feedback": ["kinetics_diffusion"],
        },
        {
            "id": "kinetics_diffusion",
            "model": "curing_rate",
            "free": ["b_d"],
            "depends": [
                {"step": "glass_transition"},
                {"step": "kinetics_chemical"},
            ],
            "dataset": {"files": kinetics_files, "split": {"part": "diffusion"}},
            "init": init("b_d"),
        },
        {
            "id": "thermal_expansion",
            "model": "thermal_expansion",
            "free": ["alpha_theta"],
            "dataset": {"files": ["thermal_expansion.csv"]},
            "init": init("alpha_theta"),
        },
        {
            "id": "chemical_shrinkage",
            "model": "chemical_shrinkage",
            "free": ["alpha_c", "alpha_theta_c"],
            "depends": [{"step": "thermal_expansion"}],
            "dataset": {"files": ["chemical_shrinkage.csv"]},
            "init": init("alpha_c", "alpha_theta_c"),
        },
        {
            "id": "glass_expansion",
            "model": "deformation",
            "free": ["alpha_theta_g"],
            "depends": [
                {"step": "glass_transition"},
                {"step": "chemical_shrinkage"},
                {"step": "thermal_expansion", "immediate": False},
            ],
            "dataset": {"files": ["glass_expansion.csv"]},
            "init": init("alpha_theta_g"),
        },
        {
            "id": "heat_capacity",
            "model": "specific_heat",
            "free": ["a1", "a2", "a3", "a4", "a5"],
            "depends": [{"step": "glass_transition"}],
            "dataset": {"files": ["heat_capacity.csv"]},
            "init": init("a1", "a2", "a3", "a4", "a5"),
        },
        {
            "id": "conductivity",
            "model": "conductivity",
            "free": ["b1", "b2", "b3", "b4"],
            "depends": [
                {"step": "glass_expansion"},
                {"step": "heat_capacity"},
                {"step": "glass_transition", "immediate": False},
                {"step": "thermal_expansion", "immediate": False},
                {"step": "chemical_shrinkage", "immediate": False},
            ],
            "dataset": {"files": ["diffusivity.csv"]},
            "init": init("b1", "b2", "b3", "b4"),
            "rho_ref": RHO_EPOXY,
        },
    ]


coverage_presets = {
    "sparse_tg_nd5": {
        "summary": "Редкие данные, n_D = 5",
        "description": "Условное покрытие параметров температуры стеклования "
        "при гауссовом шуме σ = 4 °C",
        "value": {
            "case": "sparse_tg",
            "noise": {"kind": "gaussian", "sigma": 4.0},
            "n_cov": 1000,
            "n_d_tg": 5,
        },
    },
    "sparse_tg_nd50": {
        "summary": "Редкие данные, n_D = 50",
        "value": {
            "case": "sparse_tg",
            "noise": {"kind": "gaussian", "sigma": 4.0},
            "n_cov": 1000,
            "n_d_tg": 50,
        },
    },
    "kinetics_desk": {
        "summary": "Кинетика, настольный масштаб",
        "description": "Распространение неопределённости в b_d при n_cov = 300",
        "value": {
            "case": "kinetics",
            "noise": {"kind": "gaussian", "sigma": 4e-5},
            "n_cov": 300,
        },
    },
    "heat_capacity_desk": {
        "summary": "Теплоёмкость, уменьшенные данные",
        "description": "1750 точек на кривую вместо 17500, n_cov = 200",
        "value": {
            "case": "heat_capacity",
            "noise": {"kind": "gaussian", "sigma": 16.3},
            "n_cov": 200,
            "n_d": 1750,
            "truth_mode": "marginal",
        },
    },
}
