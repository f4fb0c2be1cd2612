#!/usr/bin/env python3
"""Regenerate src/vsspipe/fixtures/data from the tables in this script.

Run from the repository root:  python3 scripts/build_fixtures.py
The output is deterministic; rerunning it must leave the tree unchanged.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from vsspipe.catalog import load_catalog  # noqa: E402
from vsspipe.codegen import MockCodegen  # noqa: E402
from vsspipe.gateway import GenerationRecord, RecordStore  # noqa: E402
from vsspipe.pipeline import build_mapping_prompt  # noqa: E402
from vsspipe.retrieval import Shortlist  # noqa: E402
from vsspipe.runner import dump_steps  # noqa: E402

OUT = ROOT / "src" / "vsspipe" / "fixtures" / "data"
CATALOG_SIZE = 982

# ---------------------------------------------------------------- catalog

CPDS_SIGNALS = [
    ("Vehicle.Cabin.ChildPresenceDetection.IsChildDetected", "sensor", "boolean",
     "True if cabin sensors detect a child left in the vehicle."),
    ("Vehicle.Cabin.ChildPresenceDetection.IsEscalationActive", "actuator", "boolean",
     "True while the child presence escalation sequence is running."),
    ("Vehicle.Cabin.ChildPresenceDetection.EscalationStage", "sensor", "uint8",
     "Index of the current child presence escalation stage, 0 in standby."),
    ("Vehicle.Cabin.ChildPresenceDetection.IsMinimalEnergyModeActive", "actuator", "boolean",
     "True if the battery guard selected minimal energy cooling or ventilation."),
    ("Vehicle.Cabin.ChildPresenceDetection.AreCarersNotified", "actuator", "boolean",
     "True once registered carers were contacted about a child left in the vehicle."),
    ("Vehicle.Cabin.ChildPresenceDetection.IsEmergencyCallRequested", "actuator", "boolean",
     "True if child presence detection requested an emergency call."),
    ("Vehicle.Cabin.ChildPresenceDetection.BatteryGuardThreshold", "attribute", "uint8",
     "State of charge in percent below which the battery guard limits energy use."),
    ("Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified", "actuator", "boolean",
     "True if a child presence notification was sent to the driver app."),
    ("Vehicle.Cabin.Infotainment.DriverAppNotification.HasDriverAcknowledged", "sensor", "boolean",
     "True if the driver acknowledged the app notification."),
    ("Vehicle.Cabin.Infotainment.DriverAppNotification.AckCountdown", "sensor", "uint16",
     "Seconds left for the driver to acknowledge before the countdown runs out."),
    ("Vehicle.Cabin.Infotainment.HVAC.AutoOverrideActive", "actuator", "boolean",
     "True while a safety function overrides the HVAC settings automatically."),
    ("Vehicle.Cabin.HVAC.CabinTemperature", "actuator", "float",
     "Cabin temperature setpoint in degrees Celsius, held by the HVAC."),
    ("Vehicle.LowVoltageSystemState", "sensor", "string",
     "State of the low voltage system, i.e. ignition state."),
    ("Vehicle.Powertrain.TractionBattery.StateOfCharge.Current", "sensor", "float",
     "Physical state of charge of the traction battery in percent."),
    ("Vehicle.LowVoltageBattery.StateOfCharge.Current", "sensor", "float",
     "State of charge of the 12 V low voltage battery in percent."),
    ("Vehicle.Body.Lights.Hazard.IsSignaling", "actuator", "boolean",
     "True if the hazard lights are signaling."),
    ("Vehicle.Body.Horn.IsActive", "actuator", "boolean", "True if the horn is sounding."),
]
ALLOWED = {"Vehicle.LowVoltageSystemState": ["UNDEFINED", "LOCK", "OFF", "ACC", "ON", "START"]}


def _filler():
    out = []

    def add(path, kind, dt, desc=None, allowed=None):
        words = path.split(".")[-2:]
        out.append((path, kind, dt, desc or f"{words[-1]} of {words[0]}.", allowed))

    out.append(("Vehicle.Speed", "sensor", "float", "Vehicle speed in km/h.", None))
    add("Vehicle.IsMoving", "sensor", "boolean")
    add("Vehicle.CurrentLocation.Latitude", "sensor", "double")
    add("Vehicle.CurrentLocation.Longitude", "sensor", "double")
    add("Vehicle.CurrentLocation.Heading", "sensor", "double")
    add("Vehicle.CurrentLocation.Altitude", "sensor", "double")
    add("Vehicle.Acceleration.Longitudinal", "sensor", "float")
    add("Vehicle.Acceleration.Lateral", "sensor", "float")
    add("Vehicle.Acceleration.Vertical", "sensor", "float")
    add("Vehicle.AngularVelocity.Roll", "sensor", "float")
    add("Vehicle.AngularVelocity.Pitch", "sensor", "float")
    add("Vehicle.AngularVelocity.Yaw", "sensor", "float")
    add("Vehicle.TraveledDistance", "sensor", "float")
    add("Vehicle.Exterior.AirTemperature", "sensor", "float")
    add("Vehicle.Exterior.Humidity", "sensor", "float")
    add("Vehicle.Exterior.LightIntensity", "sensor", "float")
    add("Vehicle.LowVoltageBattery.CurrentVoltage", "sensor", "float")
    add("Vehicle.LowVoltageBattery.CurrentCurrent", "sensor", "float")
    add("Vehicle.LowVoltageBattery.NominalVoltage", "attribute", "uint16")
    add("Vehicle.LowVoltageBattery.NominalCapacity", "attribute", "uint16")
    for row in (1, 2):
        for side in ("DriverSide", "PassengerSide"):
            b = f"Vehicle.Cabin.Door.Row{row}.{side}"
            add(f"{b}.IsOpen", "sensor", "boolean")
            add(f"{b}.IsLocked", "actuator", "boolean")
            add(f"{b}.IsChildLockActive", "sensor", "boolean")
            add(f"{b}.Window.Position", "actuator", "uint8")
            add(f"{b}.Window.IsOpen", "sensor", "boolean")
            add(f"{b}.Window.Switch", "actuator", "string", allowed=["INACTIVE", "CLOSE", "OPEN", "ONE_SHOT_CLOSE", "ONE_SHOT_OPEN"])
            add(f"{b}.Shade.Position", "actuator", "uint8")
            add(f"{b}.Shade.Switch", "actuator", "string", allowed=["INACTIVE", "CLOSE", "OPEN"])
    for row in (1, 2, 3):
        for side in ("DriverSide", "Middle", "PassengerSide"):
            b = f"Vehicle.Cabin.Seat.Row{row}.{side}"
            add(f"{b}.IsOccupied", "sensor", "boolean")
            add(f"{b}.IsBelted", "sensor", "boolean")
            add(f"{b}.Heating", "actuator", "int8")
            add(f"{b}.Massage", "actuator", "uint8")
            add(f"{b}.Position", "actuator", "uint16")
            add(f"{b}.Height", "actuator", "uint16")
            add(f"{b}.Tilt", "actuator", "float")
            add(f"{b}.Backrest.Recline", "actuator", "float")
            add(f"{b}.Headrest.Height", "actuator", "uint8")
            add(f"{b}.Switch.IsWarmerEngaged", "actuator", "boolean")
            add(f"{b}.Switch.IsCoolerEngaged", "actuator", "boolean")
            add(f"{b}.Airbag.IsDeployed", "sensor", "boolean")
            add(f"{b}.Occupant.Identifier.Subject", "sensor", "string")
    for row in range(1, 5):
        for side in ("Left", "Right"):
            b = f"Vehicle.Cabin.HVAC.Station.Row{row}.{side}"
            add(f"{b}.FanSpeed", "actuator", "uint8")
            add(f"{b}.Temperature", "actuator", "int8")
            add(f"{b}.AirDistribution", "actuator", "string", allowed=["UP", "MIDDLE", "DOWN"])
    for leaf in ("IsRecirculationActive", "IsAirConditioningActive", "IsFrontDefrosterActive",
                 "IsRearDefrosterActive"):
        add(f"Vehicle.Cabin.HVAC.{leaf}", "actuator", "boolean")
    add("Vehicle.Cabin.HVAC.AmbientAirTemperature", "sensor", "float")
    for leaf in ("IsDomeOn", "IsGloveBoxOn", "AmbientLight.Intensity", "PerceivedAmbientLight"):
        add(f"Vehicle.Cabin.Lights.{leaf}", "actuator", "uint8" if "Intensity" in leaf or "Perceived" in leaf else "boolean")
    for row in (1, 2, 3):
        for side in ("Left", "Right"):
            add(f"Vehicle.Cabin.Lights.Spotlight.Row{row}.Is{side}On", "actuator", "boolean")
    for leaf in ("Media.Volume", "Media.Played.Track", "Media.Played.Artist", "Media.Played.Album",
                 "Navigation.DestinationSet.Latitude", "Navigation.DestinationSet.Longitude",
                 "HMI.Brightness", "HMI.DayNightMode", "HMI.DistanceUnit", "HMI.TemperatureUnit"):
        dt = {"Volume": "uint8", "Latitude": "double", "Longitude": "double", "Brightness": "float"}.get(
            leaf.rsplit(".", 1)[-1], "string")
        add(f"Vehicle.Cabin.Infotainment.{leaf}", "actuator", dt)
    add("Vehicle.Cabin.Infotainment.HVAC.IsAirPurifierActive", "actuator", "boolean")
    add("Vehicle.Cabin.RearviewMirror.DimmingLevel", "actuator", "uint8")
    add("Vehicle.Cabin.Sunroof.Position", "actuator", "int8")
    add("Vehicle.Cabin.Sunroof.Switch", "actuator", "string", allowed=["INACTIVE", "CLOSE", "OPEN", "TILT_UP", "TILT_DOWN"])
    add("Vehicle.Cabin.Sunroof.Shade.Position", "actuator", "uint8")
    add("Vehicle.Cabin.DoorCount", "attribute", "uint8")
    add("Vehicle.Cabin.SeatRowCount", "attribute", "uint8")
    for leaf in ("Beam.Low.IsOn", "Beam.High.IsOn", "Fog.Front.IsOn", "Fog.Rear.IsOn",
                 "DirectionIndicator.Left.IsSignaling", "DirectionIndicator.Right.IsSignaling",
                 "Parking.IsOn", "Backup.IsOn", "LicensePlate.IsOn", "Running.IsOn"):
        add(f"Vehicle.Body.Lights.{leaf}", "actuator", "boolean")
    add("Vehicle.Body.Lights.Brake.IsActive", "actuator", "string", allowed=["INACTIVE", "ACTIVE", "ADAPTIVE"])
    add("Vehicle.Body.Lights.IsHighBeamSwitchOn", "actuator", "boolean")
    for end in ("Front", "Rear"):
        add(f"Vehicle.Body.Trunk.{end}.IsOpen", "actuator", "boolean")
        add(f"Vehicle.Body.Trunk.{end}.IsLocked", "actuator", "boolean")
        add(f"Vehicle.Body.Windshield.{end}.IsHeatingOn", "actuator", "boolean")
        add(f"Vehicle.Body.Windshield.{end}.Wiping.Mode", "actuator", "string",
            allowed=["OFF", "SLOW", "MEDIUM", "FAST", "INTERVAL", "RAINSENSOR"])
        add(f"Vehicle.Body.Windshield.{end}.WasherFluid.Level", "sensor", "uint8")
    add("Vehicle.Body.Hood.IsOpen", "actuator", "boolean")
    add("Vehicle.Body.Raindetection.Intensity", "sensor", "uint8")
    for side in ("Left", "Right"):
        add(f"Vehicle.Body.Mirrors.DriverSide.Pan" if side == "Left" else "Vehicle.Body.Mirrors.PassengerSide.Pan", "actuator", "int8")
        add(f"Vehicle.Body.Mirrors.{'DriverSide' if side == 'Left' else 'PassengerSide'}.Tilt", "actuator", "int8")
        add(f"Vehicle.Body.Mirrors.{'DriverSide' if side == 'Left' else 'PassengerSide'}.IsHeatingOn", "actuator", "boolean")
    for row in (1, 2):
        for side in ("Left", "Right"):
            b = f"Vehicle.Chassis.Axle.Row{row}.Wheel.{side}"
            add(f"{b}.Tire.Pressure", "sensor", "uint16")
            add(f"{b}.Tire.Temperature", "sensor", "float")
            add(f"{b}.Tire.IsPressureLow", "sensor", "boolean")
            add(f"{b}.Brake.PadWear", "sensor", "uint8")
            add(f"{b}.Brake.IsFluidLevelLow", "sensor", "boolean")
            add(f"{b}.Speed", "sensor", "float")
    for leaf, dt in (("SteeringWheel.Angle", "int16"), ("SteeringWheel.Tilt", "uint8"),
                     ("SteeringWheel.Extension", "uint8"), ("Accelerator.PedalPosition", "uint8"),
                     ("Brake.PedalPosition", "uint8"), ("Brake.IsDriverEmergencyBraking", "boolean"),
                     ("ParkingBrake.IsEngaged", "boolean"), ("Wheelbase", "uint16"), ("Track", "uint16")):
        add(f"Vehicle.Chassis.{leaf}", "sensor", dt)
    tb = "Vehicle.Powertrain.TractionBattery"
    for leaf, dt in (("StateOfCharge.Displayed", "float"), ("StateOfHealth", "float"),
                     ("NominalVoltage", "uint16"), ("CurrentVoltage", "float"), ("CurrentCurrent", "float"),
                     ("CurrentPower", "float"), ("Temperature.Average", "float"), ("Temperature.Min", "float"),
                     ("Temperature.Max", "float"), ("CellVoltage.Min", "float"), ("CellVoltage.Max", "float"),
                     ("Range", "uint32"), ("Charging.IsCharging", "boolean"), ("Charging.IsChargingCableConnected", "boolean"),
                     ("Charging.ChargeLimit", "uint8"), ("Charging.TimeToComplete", "uint32"),
                     ("Charging.ChargeCurrent.DC", "float"), ("Charging.ChargeVoltage.DC", "float"),
                     ("Charging.ChargePortFlap", "string"), ("IsPowerConnected", "boolean"),
                     ("IsGroundConnected", "boolean"), ("AccumulatedChargedEnergy", "float"),
                     ("AccumulatedConsumedEnergy", "float"), ("GrossCapacity", "uint16"), ("NetCapacity", "uint16")):
        add(f"{tb}.{leaf}", "sensor", dt)
    ce = "Vehicle.Powertrain.CombustionEngine"
    for leaf, dt in (("Speed", "uint16"), ("ECT", "float"), ("EOT", "float"), ("EOP", "uint16"),
                     ("IsRunning", "boolean"), ("EngineHours", "float"), ("IdleHours", "float"),
                     ("Power", "uint16"), ("Torque", "uint16"), ("MAF", "uint16"), ("MAP", "uint16"),
                     ("DieselParticulateFilter.InletTemperature", "float"),
                     ("DieselParticulateFilter.OutletTemperature", "float"), ("EngineOilLevel", "string")):
        add(f"{ce}.{leaf}", "sensor", dt)
    for leaf, dt in (("Transmission.CurrentGear", "int8"), ("Transmission.SelectedGear", "int8"),
                     ("Transmission.IsParkLockEngaged", "boolean"), ("Transmission.Temperature", "int16"),
                     ("Transmission.ClutchEngagement", "float"), ("Transmission.DriveType", "string"),
                     ("FuelSystem.Level", "uint8"), ("FuelSystem.Range", "uint32"),
                     ("FuelSystem.IsFuelLevelLow", "boolean"), ("FuelSystem.InstantConsumption", "float"),
                     ("Range", "uint32"), ("Type", "string"), ("AccumulatedBrakingEnergy", "float")):
        add(f"Vehicle.Powertrain.{leaf}", "sensor", dt)
    for leaf in ("ABS.IsEnabled", "ABS.IsEngaged", "ABS.IsError", "ESC.IsEnabled", "ESC.IsEngaged",
                 "ESC.IsError", "TCS.IsEnabled", "TCS.IsEngaged", "LaneDepartureDetection.IsEnabled",
                 "LaneDepartureDetection.IsWarning", "ObstacleDetection.IsEnabled", "ObstacleDetection.IsWarning",
                 "CruiseControl.IsActive", "CruiseControl.IsEnabled", "EBA.IsEnabled", "EBA.IsEngaged",
                 "EBD.IsEnabled", "EBD.IsEngaged", "DMS.IsEnabled", "DMS.IsWarning"):
        add(f"Vehicle.ADAS.{leaf}", "sensor", "boolean")
    add("Vehicle.ADAS.CruiseControl.SpeedSet", "actuator", "float")
    add("Vehicle.ADAS.ActiveAutonomyLevel", "sensor", "string")
    for leaf, dt in (("VehicleIdentification.VIN", "string"), ("VehicleIdentification.Model", "string"),
                     ("VehicleIdentification.Brand", "string"), ("VehicleIdentification.Year", "uint16"),
                     ("Service.IsServiceDue", "boolean"), ("Service.DistanceToService", "float"),
                     ("Service.TimeToService", "int32"), ("Driver.IsEyesOnRoad", "boolean"),
                     ("Driver.AttentiveProbability", "float"), ("Driver.FatigueLevel", "float"),
                     ("Driver.HeartRate", "uint16"), ("Driver.Identifier.Subject", "string"),
                     ("Connectivity.IsConnectivityAvailable", "boolean"), ("StartTime", "string"),
                     ("TripDuration", "float"), ("AverageSpeed", "float"), ("IsBrokenDown", "boolean"),
                     ("PowerOptimizeLevel", "uint8"), ("Trailer.IsConnected", "boolean"),
                     ("CargoVolume", "float"), ("MaxTowWeight", "uint16"), ("CurbWeight", "uint16")):
        add(f"Vehicle.{leaf}", "sensor", dt)
    pid = 0
    while len(out) + len(CPDS_SIGNALS) < CATALOG_SIZE:
        pid += 1
        add(f"Vehicle.OBD.Pid{pid:03d}.Value", "sensor", "float", f"Raw value of diagnostic parameter {pid}.")
    return out


def catalog_doc():
    entries = [(p, k, d, desc, ALLOWED.get(p)) for p, k, d, desc in CPDS_SIGNALS] + _filler()
    entries.sort(key=lambda e: e[0])
    root: dict = {}
    for path, kind, dt, desc, allowed in entries:
        segs = path.split(".")
        node = root
        for i, seg in enumerate(segs[:-1]):
            child = node.setdefault(seg, {"type": "branch", "description": f"{seg} signals.", "children": {}})
            node = child["children"]
        leaf = {"type": kind, "datatype": dt, "description": desc}
        if allowed:
            leaf["allowed"] = allowed
        if segs[-1] in node:
            raise SystemExit(f"duplicate {path}")
        node[segs[-1]] = leaf
    return root


# ------------------------------------------------------- benchmark mapping

GOLD = {
    "notify_driver": {
        "text": ("After the vehicle is parked, a child is detected in the cabin. The driver is notified "
                 "in the app and has to acknowledge the notification before the ack countdown runs out."),
        "gold": ["Vehicle.Cabin.ChildPresenceDetection.IsChildDetected",
                 "Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified",
                 "Vehicle.Cabin.Infotainment.DriverAppNotification.HasDriverAcknowledged",
                 "Vehicle.Cabin.Infotainment.DriverAppNotification.AckCountdown"],
    },
    "hvac_intervention": {
        "text": ("No acknowledgment arrived, so the escalation stays active: the HVAC auto override takes "
                 "over and holds the cabin temperature setpoint at a safe value, using minimal energy mode if needed."),
        "gold": ["Vehicle.Cabin.Infotainment.HVAC.AutoOverrideActive",
                 "Vehicle.Cabin.HVAC.CabinTemperature",
                 "Vehicle.Cabin.ChildPresenceDetection.IsEscalationActive",
                 "Vehicle.Cabin.ChildPresenceDetection.IsMinimalEnergyModeActive"],
    },
    "battery_guard": {
        "text": ("The traction battery state of charge or the low voltage battery state of charge drops "
                 "below the battery guard threshold, so minimal energy mode becomes active."),
        "gold": ["Vehicle.Powertrain.TractionBattery.StateOfCharge.Current",
                 "Vehicle.LowVoltageBattery.StateOfCharge.Current",
                 "Vehicle.Cabin.ChildPresenceDetection.BatteryGuardThreshold",
                 "Vehicle.Cabin.ChildPresenceDetection.IsMinimalEnergyModeActive"],
    },
    "alert_and_carers": {
        "text": ("The low voltage system state is OFF and nobody reacts: the hazard lights are signaling, "
                 "the horn is active and later the carers are notified."),
        "gold": ["Vehicle.LowVoltageSystemState",
                 "Vehicle.Body.Lights.Hazard.IsSignaling",
                 "Vehicle.Body.Horn.IsActive",
                 "Vehicle.Cabin.ChildPresenceDetection.AreCarersNotified"],
    },
}

POOL_16 = GOLD["notify_driver"]["gold"] + [
    "Vehicle.Cabin.ChildPresenceDetection.IsEscalationActive",
    "Vehicle.Cabin.ChildPresenceDetection.EscalationStage",
    "Vehicle.Cabin.ChildPresenceDetection.AreCarersNotified",
    "Vehicle.Cabin.Infotainment.HVAC.AutoOverrideActive",
    "Vehicle.Cabin.HVAC.CabinTemperature",
    "Vehicle.LowVoltageSystemState",
    "Vehicle.Body.Lights.Hazard.IsSignaling",
    "Vehicle.Body.Horn.IsActive",
    "Vehicle.Cabin.Door.Row1.DriverSide.IsLocked",
    "Vehicle.Cabin.Seat.Row2.PassengerSide.IsOccupied",
    "Vehicle.Powertrain.TractionBattery.StateOfCharge.Current",
    "Vehicle.Speed",
]

_G = GOLD["notify_driver"]["gold"]
# Raw answers as the two models returned them (formatting quirks included).
RECORDED_RUNS = [
    {"run": "gpt-4o-mini@16", "provider": "gpt-4o-mini", "pool": 16, "scenario": "notify_driver",
     "expected": {"correct": 4, "expected": 4, "false_positives": 0},
     "response": ", ".join(_G)},
    {"run": "vicuna-7b@16", "provider": "vicuna-7b-1.1", "pool": 16, "scenario": "notify_driver",
     "expected": {"correct": 4, "expected": 4, "false_positives": 7},
     "response": "\n".join([
         "1. `Vehicle.Cabin.ChildPresenceDetection.IsChildDetected`",
         "2. `Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified`",
         "3. `Vehicle.Cabin.Infotainment.DriverAppNotification.HasDriverAcknowledged`",
         "4. `Vehicle.Cabin.Infotainment.DriverAppNotification.AckCountdown`",
         "5. `Vehicle.Cabin.ChildPresenceDetection.IsEscalationActive`",
         "6. `Vehicle.Cabin.ChildPresenceDetection.EscalationStage`",
         "7. `Vehicle.Cabin.ChildPresenceDetection.AreCarersNotified`",
         "8. `Vehicle.LowVoltageSystemState`",
         "9. `Vehicle.Body.Lights.Hazard.IsSignaling`",
         "10. `Vehicle.Cabin.Door.Row1.DriverSide.IsLocked`",
         "11. `Vehicle.Cabin.Seat.Row2.PassengerSide.IsOccupied`",
         "12. `Vehicle.Cabin.ChildPresenceDetection.IsChildDetected`",
     ])},
    {"run": "gpt-4o-mini@982", "provider": "gpt-4o-mini", "pool": 982, "scenario": "notify_driver",
     "expected": {"correct": 2, "expected": 4, "false_positives": 4},
     "response": ("Vehicle.Cabin.ChildPresenceDetection.IsChildDetected, "
                  "Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified, "
                  "Vehicle.Cabin.Infotainment.DriverAppNotification.IsAcknowledged, "
                  "Vehicle.Cabin.Seat.Row2.PassengerSide.IsOccupied, "
                  "Vehicle.Cabin.ChildPresenceDetection.IsEscalationActive, "
                  "Vehicle.Body.Horn.IsActive")},
    {"run": "vicuna-7b@982", "provider": "vicuna-7b-1.1", "pool": 982, "scenario": "notify_driver",
     "expected": {"correct": 4, "expected": 4, "false_positives": 19},
     "response": "\n".join([
         "- Vehicle.Cabin.ChildPresenceDetection.IsChildDetected",
         "- Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified",
         "- Vehicle.Cabin.Infotainment.DriverAppNotification.HasDriverAcknowledged",
         "- Vehicle.Cabin.Infotainment.DriverAppNotification.AckCountdown",
         "- Vehicle.Cabin.Seat.Row1.DriverSide.IsOccupied",
         "- Vehicle.Cabin.Seat.Row2.DriverSide.IsOccupied",
         "- Vehicle.Cabin.Seat.Row2.PassengerSide.IsOccupied",
         "- Vehicle.Cabin.Seat.Row2.Middle.IsOccupied",
         "- Vehicle.Cabin.Seat.Row2.PassengerSide.IsBelted",
         "- Vehicle.Cabin.Door.Row1.DriverSide.IsOpen",
         "- Vehicle.Cabin.Door.Row1.DriverSide.IsLocked",
         "- Vehicle.Cabin.Door.Row2.PassengerSide.IsChildLockActive",
         "- Vehicle.Cabin.ChildPresenceDetection.IsEscalationActive",
         "- Vehicle.Cabin.ChildPresenceDetection.EscalationStage",
         "- Vehicle.Cabin.Infotainment.HMI.Brightness",
         "- Vehicle.Driver.IsEyesOnRoad",
         "- Vehicle.Driver.Identifier.Subject",
         "- Vehicle.Cabin.ChildPresenceDetection.IsChildDetected",
         "- Vehicle.LowVoltageSystemState",
         "- Vehicle.Cabin.Infotainment.DriverAppNotification.DriverResponse",
         "- Vehicle.Cabin.ChildPresence.IsChildLeftBehind",
         "- Vehicle.Cabin.Infotainment.Notification.IsAcknowledged",
         "- Vehicle.Body.Lights.Hazard.IsSignaling",
         "- Vehicle.Body.Horn.IsActive",
     ])},
]

# ------------------------------------------------------------ requirements

GROUPS = {
    "01": "Activation and detection",
    "02": "Driver notification",
    "03": "Alert escalation",
    "04": "HVAC adjustment intervention",
    "05": "Contacting carers",
    "06": "Emergency escalation",
    "07": "Return to standby",
    "08": "Battery protection",
    "09": "Status reporting",
}

CHILD = ("Given", "a child is detected in the cabin [Req_CPDS_01.6]")
PARK = ("When", "the low voltage system state is OFF [Req_CPDS_01.1]")
ACK = ("And", "the driver has acknowledged the notification [Req_CPDS_02.3]")
T1 = ("And", "T_ACK_1 elapses without acknowledgment [Req_CPDS_03.1]")
T12 = ("And", "T_ACK_1 and T_ACK_2 elapse without acknowledgment [Req_CPDS_04.1]")
T123 = ("And", "T_ACK_1, T_ACK_2 and T_ACK_3 elapse without acknowledgment [Req_CPDS_05.1]")


def S(n, ref, verb="becomes"):
    return ("Then", f"the CPDS state {verb} S{n} [{ref}]")


# id -> (body, scenario name, steps) ; steps None marks a defective draft
REQUIREMENTS = [
    ("Req_CPDS_01.1", "When the ignition is switched off, CPDS shall start evaluating the cabin sensors within EVAL_WINDOW (10 s).",
     "ignition off starts the evaluation",
     [("Given", "the low voltage system state is ON [Req_CPDS_01.1]"), PARK, S(1, "Req_CPDS_01.1")]),
    ("Req_CPDS_01.2", "Locking the parked vehicle shall start the same evaluation as switching the ignition off.",
     "locking the vehicle starts the evaluation",
     [("When", "the low voltage system state is LOCK [Req_CPDS_01.2]"), S(1, "Req_CPDS_01.2")]),
    ("Req_CPDS_01.3", "If no child is found before EVAL_WINDOW ends, CPDS shall go back to standby without any alert.",
     "no child found within the evaluation window",
     [PARK, ("And", "T_EVAL elapses with an empty cabin [Req_CPDS_01.3]"), S(0, "Req_CPDS_01.3"),
      ("And", "the escalation is not active [Req_CPDS_01.3]")]),
    ("Req_CPDS_01.4", "Switching the ignition on during the evaluation shall cancel it and return CPDS to standby.",
     "ignition on cancels the evaluation",
     [PARK, S(1, "Req_CPDS_01.4"), ("When", "the low voltage system state is ON [Req_CPDS_01.4]"),
      S(0, "Req_CPDS_01.4")]),
    ("Req_CPDS_01.5", "A child found while the evaluation window is open shall be confirmed and the escalation shall start.",
     "child found during the evaluation",
     [PARK, ("And", "5 seconds pass [Req_CPDS_01.5]"), ("When", "a child is detected in the cabin [Req_CPDS_01.5]"),
      S(3, "Req_CPDS_01.5"), ("And", "the escalation is active [Req_CPDS_01.5]")]),
    ("Req_CPDS_01.6", "A child already reported by the cabin sensors when the vehicle is parked shall be confirmed at once.",
     "child reported before parking",
     [CHILD, PARK, S(3, "Req_CPDS_01.6"), ("And", "the escalation stage is 3 [Req_CPDS_01.6]")]),

    ("Req_CPDS_02.1", "After confirmation CPDS shall send a notification to the driver app.",
     "driver app notification",
     [CHILD, PARK, ("Then", "the driver is notified in the app [Req_CPDS_02.1]")]),
    ("Req_CPDS_02.2", "The driver shall have T_ACK_1 (5 min) to acknowledge, shown as a countdown in seconds.",
     "acknowledgment countdown starts",
     [CHILD, PARK, ("Then", "the ack countdown is 300 [Req_CPDS_02.2]")]),
    ("Req_CPDS_02.3", "A valid acknowledgment within T_ACK_1 shall stop the escalation and put CPDS into standby.",
     "acknowledgment within the first window",
     [CHILD, PARK, ACK, S(0, "Req_CPDS_02.3"), ("And", "the escalation is not active [Req_CPDS_02.3]")]),
    ("Req_CPDS_02.4", "Once the driver acknowledged, the app notification shall be withdrawn.",
     "notification withdrawn after acknowledgment",
     [CHILD, PARK, ACK, ("Then", "the driver is not notified in the app [Req_CPDS_02.4]")]),

    ("Req_CPDS_03.1", "Without acknowledgment by T_ACK_1, CPDS shall enter S4 and switch the hazard lights on.",
     "hazard lights after the first window",
     [CHILD, PARK, T1, S(4, "Req_CPDS_03.1"), ("And", "the hazard lights are signaling [Req_CPDS_03.1]")]),
    ("Req_CPDS_03.2", "In S4 the horn shall sound to attract bystanders.",
     "horn sounds during the alert",
     [CHILD, PARK, T1, ("Then", "the horn is active [Req_CPDS_03.2]")]),
    ("Req_CPDS_03.3", "An acknowledgment during S4 shall switch the hazard lights and the horn off.",
     "acknowledgment ends the alert",
     [CHILD, PARK, T1, ACK, ("Then", "the hazard lights are not signaling [Req_CPDS_03.3]"),
      ("And", "the horn is not active [Req_CPDS_03.3]")]),
    ("Req_CPDS_03.4", "Entering S4 shall give the driver a new window T_ACK_2 and restart the countdown.",
     "second window starts with the alert",
     [CHILD, PARK, T1, ("Then", "the escalation stage is 4 [Req_CPDS_03.4]"),
      ("And", "the ack countdown is 300 [Req_CPDS_03.4]")]),

    ("Req_CPDS_04.1", "Without acknowledgment by T_ACK_2, CPDS shall enter S5, override the HVAC and keep the cabin within SAFE_TEMP_RANGE.",
     "HVAC takes over after the second window",
     [CHILD, ("And", "the cabin temperature is 35.0 [Req_CPDS_04.1]"), PARK, T12, S(5, "Req_CPDS_04.1"),
      ("And", "the HVAC auto override is active [Req_CPDS_04.1]"),
      ("And", "the cabin temperature is between 18 and 24 [Req_CPDS_04.1]")]),
    ("Req_CPDS_04.2", "Battery guard: if the traction or the 12 V battery state of charge is below the guard threshold, CPDS shall prefer minimal energy cooling or ventilation and keep escalating.",
     None, None),
    ("Req_CPDS_04.3", "An acknowledgment during the HVAC intervention shall end the override and return CPDS to standby.",
     "acknowledgment ends the HVAC intervention",
     [CHILD, PARK, T12, ACK, ("Then", "the HVAC auto override is not active [Req_CPDS_04.3]"),
      ("And", "the escalation is not active [Req_CPDS_04.3]")]),
    ("Req_CPDS_04.4", "Below SOC_CRIT the HVAC hold shall be skipped and CPDS shall go straight to contacting carers.",
     "critical battery skips the HVAC hold",
     [CHILD, ("And", "the traction battery state of charge is 5.0 [Req_CPDS_04.4]"), PARK, T12,
      S(6, "Req_CPDS_04.4"), ("And", "the HVAC auto override is not active [Req_CPDS_04.4]"),
      ("And", "the carers are notified [Req_CPDS_04.4]")]),
    ("Req_CPDS_04.5", "When T_ACK_3 expires the HVAC override shall stay on while carers are contacted.",
     "override kept while carers are contacted",
     [CHILD, PARK, T123, ("Then", "the carers are notified [Req_CPDS_04.5]"),
      ("And", "the HVAC auto override is active [Req_CPDS_04.5]")]),

    ("Req_CPDS_05.1", "Without acknowledgment by T_ACK_3, CPDS shall enter S6 and contact the registered carers.",
     "carers contacted after the third window",
     [CHILD, PARK, T123, S(6, "Req_CPDS_05.1"), ("And", "the carers are notified [Req_CPDS_05.1]")]),
    ("Req_CPDS_05.2", "An acknowledgment while carers are being contacted shall end the escalation.",
     "acknowledgment while carers are contacted",
     [CHILD, PARK, T123, ACK, S(0, "Req_CPDS_05.2"), ("And", "the carers are not notified [Req_CPDS_05.2]")]),
    ("Req_CPDS_05.3", "The hazard lights shall keep signaling while carers are contacted.",
     "hazard lights stay on in the carer stage",
     [CHILD, PARK, T123, ("Then", "the hazard lights are signaling [Req_CPDS_05.3]")]),
    ("Req_CPDS_05.4", "Carers shall be contacted when the battery is critical or when the HVAC window expires, whichever comes first.",
     None, None),

    ("Req_CPDS_06.1", "If nobody reacts within T_CARERS after carers were contacted, CPDS shall request an emergency call.",
     "emergency call after the carer window",
     [CHILD, PARK, T123, ("And", "T_CARERS elapses without acknowledgment [Req_CPDS_06.1]"),
      S(7, "Req_CPDS_06.1"), ("And", "an emergency call is requested [Req_CPDS_06.1]")]),
    ("Req_CPDS_06.2", "The escalation shall stay active in the emergency stage.",
     "escalation stays active in the emergency stage",
     [CHILD, PARK, T123, ("And", "T_CARERS elapses without acknowledgment [Req_CPDS_06.2]"),
      ("Then", "the escalation is active [Req_CPDS_06.2]")]),
    ("Req_CPDS_06.3", "The emergency stage shall be entered after an unanswered carer contact or after a sensor fault during escalation.",
     None, None),

    ("Req_CPDS_07.1", "Returning to standby shall clear every CPDS output.",
     "outputs cleared in standby",
     [CHILD, PARK, T1, ACK, ("Then", "the escalation stage is 0 [Req_CPDS_07.1]"),
      ("And", "the hazard lights are not signaling [Req_CPDS_07.1]")]),
    ("Req_CPDS_07.2", "CPDS shall remain in standby while the vehicle is in use.",
     "standby kept while driving",
     [("Given", "the low voltage system state is ON [Req_CPDS_07.2]"), ("When", "60 seconds pass [Req_CPDS_07.2]"),
      S(0, "Req_CPDS_07.2", "is")]),
    ("Req_CPDS_07.3", "Leaving the HVAC intervention early shall be logged before standby is reported.",
     "early end of the HVAC intervention is logged",
     [CHILD, PARK, T12, ACK, ("Then", 'the SUT log reports "moving to standby" [Req_CPDS_07.3]')]),
    ("Req_CPDS_07.4", "After standby a new parking event shall start a fresh escalation.",
     "new escalation after standby",
     [CHILD, PARK, ACK, ("When", "the low voltage system state is ON [Req_CPDS_01.4]"), PARK,
      S(3, "Req_CPDS_07.4"), ("And", "the escalation is active [Req_CPDS_07.4]")]),

    ("Req_CPDS_08.1", "The battery guard threshold shall be configurable through a broker signal.",
     "configured battery guard threshold",
     [CHILD, ("And", "the battery guard threshold is 40 [Req_CPDS_08.1]"),
      ("And", "the traction battery state of charge is 35.0 [Req_CPDS_08.1]"), PARK, T12,
      S(5, "Req_CPDS_08.1"), ("And", "minimal energy mode is active [Req_CPDS_08.1]")]),
    ("Req_CPDS_08.2", "A state of charge dropping below the guard threshold during S5 shall select minimal energy mode.",
     "battery guard during the HVAC intervention",
     [CHILD, PARK, T12, ("When", "the low voltage battery state of charge is 20.0 [Req_CPDS_08.2]"),
      ("Then", "minimal energy mode is active [Req_CPDS_08.2]"), S(5, "Req_CPDS_08.2", "is")]),
    ("Req_CPDS_08.3", "A state of charge dropping below SOC_CRIT during S5 shall end the HVAC hold and contact carers.",
     "critical battery during the HVAC intervention",
     [CHILD, PARK, T12, ("When", "the traction battery state of charge is 8.0 [Req_CPDS_08.3]"),
      S(6, "Req_CPDS_08.3"), ("And", "the HVAC auto override is not active [Req_CPDS_08.3]")]),

    ("Req_CPDS_09.1", "CPDS shall publish its current escalation stage.",
     "escalation stage published",
     [CHILD, PARK, T1, ("Then", "the escalation stage is 4 [Req_CPDS_09.1]")]),
    ("Req_CPDS_09.2", "The countdown shall show the window of the current stage.",
     "countdown follows the stage window",
     [CHILD, PARK, T12, ("Then", "the ack countdown is 300 [Req_CPDS_09.2]"), S(5, "Req_CPDS_09.2", "is")]),
    ("Req_CPDS_09.3", "Status changes shall be reported to the driver or to the carers depending on the stage.",
     None, None),
]

# Drafts a model produced for requirements with OR conditions; none of them parses.
DEFECTIVE = {
    "Req_CPDS_04.2": """Feature: CPDS Battery protection during HVAC intervention

  @Req_CPDS_04_2
  Scenario: battery guard selects minimal energy mode
    Given a child is detected in the cabin [Req_CPDS_01.6]
    And the traction battery state of charge is 25.0 [Req_CPDS_04.2]
    Or the low voltage battery state of charge is 25.0 [Req_CPDS_04.2]
    When the low voltage system state is OFF [Req_CPDS_01.1]
    And T_ACK_1 and T_ACK_2 elapse without acknowledgment [Req_CPDS_04.1]
    Then minimal energy mode is active [Req_CPDS_04.2]
""",
    "Req_CPDS_05.4": """Feature: CPDS Contacting carers

  @Req_CPDS_05_4
  Scenario Outline: carers contacted on the first trigger
    Given a child is detected in the cabin [Req_CPDS_01.6]
    When <TRIGGER> happens first [Req_CPDS_05.4]
    Then the carers are notified [Req_CPDS_05.4]
""",
    "Req_CPDS_06.3": """Feature: CPDS Emergency escalation
    Given a child is detected in the cabin [Req_CPDS_01.6]
    When the carer contact is unanswered or a sensor fault occurs [Req_CPDS_06.3]
    Then an emergency call is requested [Req_CPDS_06.3]
""",
    "Req_CPDS_09.3": """Feature: CPDS Status reporting

  Background:
    Given a child is detected in the cabin [Req_CPDS_01.6]

  @Req_CPDS_09_3
  Scenario: status goes to the driver or the carers
    When the low voltage system state is OFF [Req_CPDS_01.1]
    Then the driver is notified in the app [Req_CPDS_09.3]
""",
}

# What a reviewer turned the defective drafts into.
REVIEW_EDITS = {
    "Req_CPDS_04.2": ("battery guard selects minimal energy mode",
                      [CHILD, ("And", "the low voltage battery state of charge is 25.0 [Req_CPDS_04.2]"), PARK, T12,
                       S(5, "Req_CPDS_04.2"), ("And", "minimal energy mode is active [Req_CPDS_04.2]")]),
    "Req_CPDS_05.4": ("carers contacted when the battery is critical",
                      [CHILD, ("And", "the low voltage battery state of charge is 6.0 [Req_CPDS_05.4]"), PARK, T12,
                       ("Then", "the carers are notified [Req_CPDS_05.4]")]),
    "Req_CPDS_06.3": ("emergency call after an unanswered carer contact",
                      [CHILD, PARK, T123, ("And", "T_CARERS elapses without acknowledgment [Req_CPDS_06.3]"),
                       ("Then", "an emergency call is requested [Req_CPDS_06.3]")]),
    "Req_CPDS_09.3": ("status reported to the driver first",
                      [CHILD, PARK, ("Then", "the driver is notified in the app [Req_CPDS_09.3]"),
                       ("And", "the carers are not notified [Req_CPDS_09.3]")]),
}


def group_of(rid):
    return rid.split("_")[2].split(".")[0]


def feature_text(rid, name, steps):
    g = group_of(rid)
    tag = "@" + rid.replace(".", "_")
    lines = [f"Feature: CPDS {GROUPS[g]} (Req_CPDS_{g})", "", f"  {tag}", f"  Scenario: {name}"]
    lines += [f"    {kw} {text}" for kw, text in steps]
    return "\n".join(lines) + "\n"


def templates_text():
    blocks = []
    for rid, _body, name, steps in REQUIREMENTS:
        text = DEFECTIVE[rid] if steps is None else feature_text(rid, name, steps)
        blocks.append(f"=== {rid}\n{text}")
    return "".join(blocks)


def review_edits_text():
    return "".join(f"=== {rid}\n{feature_text(rid, name, steps)}" for rid, (name, steps) in REVIEW_EDITS.items())


# ------------------------------------------------------------- flowchart

FLOWCHART = """# CPDS escalation logic: one state per line, then one transition per line.
S0: Standby
S1: Evaluate cabin sensors
S2: Child confirmed
S3: Notify driver
S4: Alert escalation
S5: HVAC intervention
S6: Contact carers
S7: Emergency
S0 --[ignition OFF or vehicle locked]--> S1
S1 --[no child within EVAL_WINDOW]--> S0
S1 --[child detected]--> S2
S2 --[presence confirmed]--> S3
S3 --[valid acknowledgment]--> S0
S3 --[T_ACK_1 expired]--> S4
S4 --[T_ACK_2 expired]--> S5
S4 --[valid acknowledgment]--> S0
S5 --[valid acknowledgment]--> S0
S5 --[T_ACK_3 expired or SOC below SOC_CRIT]--> S6
S6 --[T_CARERS expired]--> S7
"""

GHERKIN_EXAMPLE = """Feature: Door lock reminder

  @Req_DOOR_01_1
  Scenario: reminder when the car is left unlocked
    Given the driver door is closed [Req_DOOR_01.1]
    And the vehicle is unlocked [Req_DOOR_01.1]
    When 2 minutes pass [Req_DOOR_01.2]
    Then a lock reminder is shown in the app [Req_DOOR_01.2]
"""

BROKER_EXAMPLE = """from vsspipe.broker import BrokerClient

client = BrokerClient.connect("127.0.0.1:55555")
client.set_current_values({"Vehicle.Cabin.Door.Row1.DriverSide.IsLocked": True})
dp = client.get_current("Vehicle.Cabin.Door.Row1.DriverSide.IsLocked")
assert dp.value is True
"""

RUNNER_EXAMPLE = """### environment
{"time_scale": 1000.0, "strict": true}
### steps
{"step": "the driver door is locked (Vehicle.Cabin.Door.Row1.DriverSide.IsLocked) [Req_DOOR_01.1]", "action": "set_signal", "path": "Vehicle.Cabin.Door.Row1.DriverSide.IsLocked", "value": true}
{"step": "2 minutes pass [Req_DOOR_01.2]", "action": "advance_time", "seconds": 120.0}
{"step": "the lock reminder is shown [Req_DOOR_01.2]", "action": "expect_log", "text": "lock reminder", "timeout": 2.0}
"""

HVAC_FEATURE = """Feature: CPDS HVAC intervention

  Scenario: HVAC adjustment intervention (Req_CPDS_04)
    Given Vehicle.Cabin.ChildPresenceDetection.IsChildDetected is true [Req_CPDS_01.6]
    And Vehicle.Cabin.HVAC.CabinTemperature is 18.0 [Req_CPDS_04.1]
    And Vehicle.LowVoltageSystemState is OFF [Req_CPDS_01.1]
    And Vehicle.Cabin.Infotainment.DriverAppNotification.IsDriverNotified is true [Req_CPDS_04.1]
    When T_ACK_1 and T_ACK_2 elapse with no valid acknowledgment [Req_CPDS_03.1]
    Then Vehicle.Cabin.Infotainment.HVAC.AutoOverrideActive is set to true [Req_CPDS_04.1]
    When Vehicle.Cabin.Infotainment.DriverAppNotification.HasDriverAcknowledged is true [Req_CPDS_04.3]
    Then Vehicle.Cabin.ChildPresenceDetection.IsEscalationActive is reset to false [Req_CPDS_04.2]
"""

HVAC_OUTLINE = """Feature: CPDS HVAC adjustment intervention (Req_CPDS_04)
  # Child confirmed, driver silent through the first two windows.

  @Req_CPDS_04_1 @Req_CPDS_04_2
  Scenario Outline: CPDS_04_1 HVAC takes over and the battery guard picks the energy mode
    Given a child is detected in the cabin [Req_CPDS_01.6]
    And the traction battery state of charge is <SOC> [Req_CPDS_04.2]
    And the battery guard threshold is <GUARD> [Req_CPDS_04.2]
    When the low voltage system state is OFF [Req_CPDS_01.1]
    And T_ACK_1 and T_ACK_2 elapse without acknowledgment [Req_CPDS_03.1]
    Then the CPDS state becomes S5 [Req_CPDS_04.1]
    And the HVAC auto override is active [Req_CPDS_04.1]
    And the cabin temperature setpoint is between <SAFE_MIN> and <SAFE_MAX> [Req_CPDS_04.1]
    And the driver is notified in the app [Req_CPDS_02.2]
    And the ack countdown is 300 [Req_CPDS_04.3]
    And the escalation is active [Req_CPDS_04.1]
    And minimal energy mode is <MINIMAL> [Req_CPDS_04.2]

    Examples:
      | SOC  | GUARD | SAFE_MIN | SAFE_MAX | MINIMAL |
      | 80.0 | 30    | 18       | 24       | false   |
      | 25.0 | 30    | 18       | 24       | true    |
"""

OUTLINE_GOLD = ["Vehicle.Cabin.Infotainment.HVAC.AutoOverrideActive",
                "Vehicle.Cabin.HVAC.CabinTemperature",
                "Vehicle.Powertrain.TractionBattery.StateOfCharge.Current",
                "Vehicle.Cabin.ChildPresenceDetection.IsMinimalEnergyModeActive"]

PASSK_CASES = [
    {"n": 5, "c": 5, "k": 1, "expected": 1.0},
    {"n": 5, "c": 0, "k": 3, "expected": 0.0},
    {"n": 5, "c": 4, "k": 1, "expected": 0.8},
    {"n": 5, "c": 3, "k": 3, "expected": 1.0},
]


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}

    def write(name, text):
        (OUT / name).write_text(text, encoding="utf-8")
        files[name] = name

    cat_json = json.dumps(catalog_doc(), indent=1) + "\n"
    write("vss_catalog.json", cat_json)
    catalog = load_catalog(cat_json)
    assert len(catalog) == CATALOG_SIZE, len(catalog)
    write("candidate_pool_16.json", json.dumps(POOL_16, indent=1) + "\n")
    for p in POOL_16:
        assert p in catalog, p

    reqs = [{"id": rid, "body": body, "parent": rid.split(".")[0]} for rid, body, _, _ in REQUIREMENTS]
    write("requirements.jsonl", "".join(json.dumps(r) + "\n" for r in reqs))
    write("group_titles.json", json.dumps({f"Req_CPDS_{g}": t for g, t in GROUPS.items()}, indent=1) + "\n")
    write("flowchart.txt", FLOWCHART)
    write("gherkin_templates.txt", templates_text())
    write("review_edits.txt", review_edits_text())
    write("gherkin_example.feature", GHERKIN_EXAMPLE)
    write("broker_example.py.txt", BROKER_EXAMPLE)
    write("runner_example.txt", RUNNER_EXAMPLE)
    write("hvac_adjustment.feature", HVAC_FEATURE)
    write("hvac_outline.feature", HVAC_OUTLINE)
    write("hvac_adjustment.steps.jsonl", dump_steps(MockCodegen(catalog).bindings(HVAC_FEATURE)))

    gold = dict(GOLD)
    gold["hvac_outline"] = {"text": HVAC_OUTLINE, "gold": OUTLINE_GOLD}
    for sid, g in gold.items():
        assert len(g["gold"]) == 4 and all(p in catalog for p in g["gold"]), sid
    write("gold_mappings.json", json.dumps(gold, indent=1) + "\n")
    write("passk_cases.json", json.dumps(PASSK_CASES, indent=1) + "\n")

    runs, records = [], []
    pool = catalog.subset(POOL_16)
    for run in RECORDED_RUNS:
        cands = pool.flat if run["pool"] == 16 else catalog.flat
        request = build_mapping_prompt(GOLD[run["scenario"]]["text"], Shortlist.from_entries(run["scenario"], cands),
                                       provider_id=run["provider"])
        records.append(GenerationRecord(request.digest, run["response"], run["provider"], 0.0))
        entry = {k: run[k] for k in ("run", "provider", "pool", "scenario", "expected")}
        entry["candidates"] = "candidate_pool_16.json" if run["pool"] == 16 else "vss_catalog.json"
        runs.append(entry)
    write("mapping_runs.json", json.dumps(runs, indent=1) + "\n")
    store_path = OUT / "recorded_mapping.jsonl"
    store_path.unlink(missing_ok=True)
    RecordStore(store_path).extend(records)
    files["recorded_mapping.jsonl"] = "recorded_mapping.jsonl"

    manifest = {
        "files": {name: sha256(OUT / name) for name in sorted(files)},
        "expected": {
            "catalog_entries": CATALOG_SIZE,
            "candidate_pool": 16,
            "requirements": len(reqs),
            "flowchart_states": 8,
            "flowchart_transitions": 11,
            "gherkin_valid": sum(1 for r in REQUIREMENTS if r[3] is not None),
            "gherkin_review": len(DEFECTIVE),
            "mapping_rows": {r["run"]: r["expected"] for r in runs},
            "hvac_summary": [
                "1 feature passed, 0 failed, 0 skipped",
                "1 scenario passed, 0 failed, 0 skipped",
                "8 steps passed, 0 failed, 0 skipped, 0 undefined",
            ],
        },
    }
    (OUT / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(files) + 1} files to {OUT.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
