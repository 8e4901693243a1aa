#!/usr/bin/env python3
"""Regenerate the STIX 2.1 knowledge-bundle snapshots under src/icshunt/data/.

The repository ships offline snapshot bundles in the exact format of the
public ATT&CK STIX distributions (x-mitre-tactic / attack-pattern /
intrusion-set / relationship / x-mitre-matrix objects). This script builds
them from the hand-curated catalogs below and enforces the properties the
package relies on:

  * the ICS matrix has exactly the 12 canonical tactics in matrix order;
  * the techniques referenced by the bundled detection rules exist with
    their canonical names;
  * group profiles are pairwise distinct with a healthy Hamming distance,
    so profile classification is well-posed;
  * a couple of revoked/deprecated objects and one dangling relationship
    are present, matching the quirks loaders must tolerate in the wild.

Run from the repository root:  python tools/make_bundles.py
"""

from __future__ import annotations

import json
import pathlib
import sys
import uuid

OUT_DIR = pathlib.Path(__file__).resolve().parent.parent / "src" / "icshunt" / "data"

CREATED = "2023-10-01T00:00:00.000Z"
MODIFIED = "2025-04-15T00:00:00.000Z"

MIN_PAIRWISE_DISTANCE_ICS = 6
MIN_PAIRWISE_DISTANCE_ENTERPRISE = 8

# --------------------------------------------------------------------------
# ICS domain catalog

ICS_TACTICS = [
    # (attack id, name, shortname) in matrix column order
    ("TA0108", "Initial Access", "initial-access"),
    ("TA0104", "Execution", "execution"),
    ("TA0110", "Persistence", "persistence"),
    ("TA0111", "Privilege Escalation", "privilege-escalation"),
    ("TA0103", "Evasion", "evasion"),
    ("TA0102", "Discovery", "discovery"),
    ("TA0109", "Lateral Movement", "lateral-movement"),
    ("TA0100", "Collection", "collection"),
    ("TA0101", "Command and Control", "command-and-control"),
    ("TA0107", "Inhibit Response Function", "inhibit-response-function"),
    ("TA0106", "Impair Process Control", "impair-process-control"),
    ("TA0105", "Impact", "impact"),
]

# (attack id, name, [tactic shortnames], optional description)
ICS_TECHNIQUES = [
    ("T0810", "Data Historian Compromise", ["initial-access"], None),
    ("T0817", "Drive-by Compromise", ["initial-access"], None),
    ("T0818", "Engineering Workstation Compromise", ["initial-access"], None),
    ("T0819", "Exploit Public-Facing Application", ["initial-access"], None),
    ("T0822", "External Remote Services", ["initial-access"], None),
    ("T0847", "Replication Through Removable Media", ["initial-access"], None),
    ("T0862", "Supply Chain Compromise", ["initial-access"], None),
    ("T0865", "Spearphishing Attachment", ["initial-access"], None),
    ("T0883", "Internet Accessible Device", ["initial-access"], None),
    ("T0807", "Command-Line Interface", ["execution"], None),
    ("T0823", "Graphical User Interface", ["execution"], None),
    ("T0853", "Scripting", ["execution"], None),
    ("T0863", "User Execution", ["execution"], None),
    ("T0871", "Execution through API", ["execution"], None),
    ("T0874", "Hooking", ["execution", "privilege-escalation"], None),
    ("T0858", "Change Operating Mode", ["execution", "evasion"], None),
    ("T0839", "Module Firmware", ["persistence"], None),
    ("T0857", "System Firmware", ["persistence", "inhibit-response-function"], None),
    ("T0859", "Valid Accounts", ["persistence", "lateral-movement"], None),
    ("T0873", "Project File Infection", ["persistence"], None),
    ("T0890", "Exploitation for Privilege Escalation", ["privilege-escalation"], None),
    ("T0820", "Exploitation for Evasion", ["evasion"], None),
    ("T0849", "Masquerading", ["evasion"], None),
    ("T0851", "Rootkit", ["evasion"], None),
    ("T0872", "Indicator Removal on Host", ["evasion"], None),
    ("T0840", "Network Connection Enumeration", ["discovery"], None),
    ("T0842", "Network Sniffing", ["discovery", "collection"], None),
    (
        "T0846",
        "Remote System Discovery",
        ["discovery"],
        "Adversaries may attempt to get a listing of other systems by IP address, "
        "hostname, or other logical identifier on a network that may be used for "
        "subsequent behaviors. Scanning for reachable control-system services, "
        "sweeping protocol function codes, and enumerating device unit identifiers "
        "are common forms of remote system discovery in operational networks.",
    ),
    (
        "T0888",
        "Remote System Information Discovery",
        ["discovery"],
        "Adversaries may attempt to get detailed information about remote systems, "
        "including the hardware model, firmware revision, and configured services. "
        "Industrial protocols expose identification requests that return vendor and "
        "device identity strings, which adversaries query to select tooling for the "
        "installed equipment.",
    ),
    ("T0887", "Wireless Sniffing", ["discovery"], None),
    ("T0812", "Default Credentials", ["lateral-movement"], None),
    ("T0866", "Exploitation of Remote Services", ["lateral-movement"], None),
    ("T0867", "Lateral Tool Transfer", ["lateral-movement"], None),
    ("T0886", "Remote Services", ["lateral-movement"], None),
    ("T0801", "Monitor Process State", ["collection"], None),
    ("T0802", "Automated Collection", ["collection"], None),
    ("T0811", "Data from Information Repositories", ["collection"], None),
    ("T0830", "Adversary-in-the-Middle", ["collection", "evasion"], None),
    ("T0845", "Program Upload", ["collection"], None),
    ("T0852", "Screen Capture", ["collection"], None),
    ("T0868", "Detect Operating Mode", ["collection"], None),
    ("T0877", "I/O Image", ["collection"], None),
    ("T0869", "Standard Application Layer Protocol", ["command-and-control"], None),
    ("T0884", "Connection Proxy", ["command-and-control"], None),
    ("T0885", "Commonly Used Port", ["command-and-control"], None),
    ("T0800", "Activate Firmware Update Mode", ["inhibit-response-function"], None),
    ("T0803", "Block Command Message", ["inhibit-response-function"], None),
    ("T0804", "Block Reporting Message", ["inhibit-response-function"], None),
    ("T0809", "Data Destruction", ["inhibit-response-function"], None),
    ("T0814", "Denial of Service", ["inhibit-response-function"], None),
    ("T0816", "Device Restart/Shutdown", ["inhibit-response-function"], None),
    ("T0835", "Manipulate I/O Image", ["inhibit-response-function"], None),
    ("T0878", "Alarm Suppression", ["inhibit-response-function"], None),
    ("T0881", "Service Stop", ["inhibit-response-function"], None),
    ("T0806", "Brute Force I/O", ["impair-process-control"], None),
    (
        "T0836",
        "Modify Parameter",
        ["impair-process-control"],
        "Adversaries may modify parameters used to instruct industrial control "
        "system devices. Devices operate via programs and configurations that hold "
        "setpoints and other parameter values; writing new values can produce "
        "dangerous process behavior while appearing to be legitimate control "
        "traffic.",
    ),
    (
        "T0855",
        "Unauthorized Command Message",
        ["impair-process-control"],
        "Adversaries may send unauthorized command messages to instruct control "
        "system assets to perform actions outside their intended functionality or "
        "without the logical preconditions to trigger them. Command messages such "
        "as protocol write operations are used in industrial networks to give "
        "direct instructions to devices; an unauthorized instance can change the "
        "state of field equipment.",
    ),
    ("T0856", "Spoof Reporting Message", ["impair-process-control"], None),
    ("T0813", "Denial of Control", ["impact"], None),
    ("T0815", "Denial of View", ["impact"], None),
    ("T0826", "Loss of Availability", ["impact"], None),
    ("T0827", "Loss of Control", ["impact"], None),
    ("T0828", "Loss of Productivity and Revenue", ["impact"], None),
    ("T0829", "Loss of View", ["impact"], None),
    ("T0831", "Manipulation of Control", ["impact"], None),
    ("T0832", "Manipulation of View", ["impact"], None),
    ("T0879", "Damage to Property", ["impact"], None),
    ("T0882", "Theft of Operational Information", ["impact"], None),
]

#: Excluded objects tolerated in real bundles: revoked and deprecated entries.
ICS_REVOKED = [("T0833", "Modify Control Logic", ["impair-process-control"])]
ICS_DEPRECATED = [("T0850", "Role Identification", ["discovery"])]

ICS_GROUPS = [
    (
        "G0034",
        "Sandworm Team",
        ["ELECTRUM", "Telebots", "IRIDIUM"],
        ["T0807", "T0803", "T0813", "T0816", "T0827", "T0831",
         "T0836", "T0846", "T0855", "T0859", "T0865", "T0888"],
    ),
    (
        "G1000",
        "ALLANITE",
        ["Palmetto Fusion"],
        ["T0810", "T0811", "T0846", "T0852", "T0859", "T0888"],
    ),
    (
        "G0032",
        "Lazarus Group",
        ["HIDDEN COBRA", "Guardians of Peace"],
        ["T0812", "T0817", "T0849", "T0853", "T0863",
         "T0865", "T0866", "T0869", "T0882", "T0884"],
    ),
    (
        "G0035",
        "Dragonfly",
        ["ENERGETIC BEAR", "Crouching Yeti"],
        ["T0801", "T0811", "T0812", "T0819", "T0822",
         "T0842", "T0845", "T0862", "T0885", "T0886"],
    ),
    (
        "G0049",
        "OilRig",
        ["IRN2", "HELIX KITTEN"],
        ["T0807", "T0811", "T0812", "T0840", "T0853", "T0859", "T0865", "T0869"],
    ),
    (
        "G0082",
        "APT33",
        ["Elfin", "HOLMIUM"],
        ["T0809", "T0814", "T0826", "T0853", "T0863", "T0865", "T0869", "T0884"],
    ),
    (
        "G0088",
        "TEMP.Veles",
        ["XENOTIME"],
        ["T0807", "T0822", "T0827", "T0835", "T0851",
         "T0853", "T0856", "T0859", "T0872", "T0881"],
    ),
    (
        "G1002",
        "HEXANE",
        ["Lyceum", "Siamesekitten"],
        ["T0802", "T0812", "T0842", "T0865", "T0871", "T0885", "T0887"],
    ),
]

# --------------------------------------------------------------------------
# Enterprise domain catalog

ENTERPRISE_TACTICS = [
    ("TA0043", "Reconnaissance", "reconnaissance"),
    ("TA0042", "Resource Development", "resource-development"),
    ("TA0001", "Initial Access", "initial-access"),
    ("TA0002", "Execution", "execution"),
    ("TA0003", "Persistence", "persistence"),
    ("TA0004", "Privilege Escalation", "privilege-escalation"),
    ("TA0005", "Defense Evasion", "defense-evasion"),
    ("TA0006", "Credential Access", "credential-access"),
    ("TA0007", "Discovery", "discovery"),
    ("TA0008", "Lateral Movement", "lateral-movement"),
    ("TA0009", "Collection", "collection"),
    ("TA0011", "Command and Control", "command-and-control"),
    ("TA0010", "Exfiltration", "exfiltration"),
    ("TA0040", "Impact", "impact"),
]

ENTERPRISE_TECHNIQUES = [
    ("T1595", "Active Scanning", ["reconnaissance"], None),
    ("T1592", "Gather Victim Host Information", ["reconnaissance"], None),
    ("T1589", "Gather Victim Identity Information", ["reconnaissance"], None),
    ("T1583", "Acquire Infrastructure", ["resource-development"], None),
    ("T1588", "Obtain Capabilities", ["resource-development"], None),
    ("T1608", "Stage Capabilities", ["resource-development"], None),
    ("T1566", "Phishing", ["initial-access"], None),
    ("T1190", "Exploit Public-Facing Application", ["initial-access"], None),
    ("T1133", "External Remote Services", ["initial-access", "persistence"], None),
    (
        "T1078",
        "Valid Accounts",
        ["defense-evasion", "persistence", "privilege-escalation", "initial-access"],
        None,
    ),
    ("T1059", "Command and Scripting Interpreter", ["execution"], None),
    ("T1204", "User Execution", ["execution"], None),
    ("T1053", "Scheduled Task/Job", ["execution", "persistence", "privilege-escalation"], None),
    ("T1047", "Windows Management Instrumentation", ["execution"], None),
    ("T1547", "Boot or Logon Autostart Execution", ["persistence", "privilege-escalation"], None),
    ("T1543", "Create or Modify System Process", ["persistence", "privilege-escalation"], None),
    ("T1136", "Create Account", ["persistence"], None),
    ("T1068", "Exploitation for Privilege Escalation", ["privilege-escalation"], None),
    ("T1055", "Process Injection", ["defense-evasion", "privilege-escalation"], None),
    ("T1027", "Obfuscated Files or Information", ["defense-evasion"], None),
    ("T1070", "Indicator Removal", ["defense-evasion"], None),
    ("T1218", "System Binary Proxy Execution", ["defense-evasion"], None),
    ("T1112", "Modify Registry", ["defense-evasion"], None),
    ("T1003", "OS Credential Dumping", ["credential-access"], None),
    ("T1110", "Brute Force", ["credential-access"], None),
    ("T1056", "Input Capture", ["collection", "credential-access"], None),
    ("T1046", "Network Service Discovery", ["discovery"], None),
    ("T1018", "Remote System Discovery", ["discovery"], None),
    ("T1082", "System Information Discovery", ["discovery"], None),
    ("T1083", "File and Directory Discovery", ["discovery"], None),
    ("T1021", "Remote Services", ["lateral-movement"], None),
    ("T1570", "Lateral Tool Transfer", ["lateral-movement"], None),
    ("T1534", "Internal Spearphishing", ["lateral-movement"], None),
    ("T1005", "Data from Local System", ["collection"], None),
    ("T1114", "Email Collection", ["collection"], None),
    ("T1113", "Screen Capture", ["collection"], None),
    ("T1560", "Archive Collected Data", ["collection"], None),
    ("T1071", "Application Layer Protocol", ["command-and-control"], None),
    ("T1105", "Ingress Tool Transfer", ["command-and-control"], None),
    ("T1573", "Encrypted Channel", ["command-and-control"], None),
    ("T1090", "Proxy", ["command-and-control"], None),
    ("T1041", "Exfiltration Over C2 Channel", ["exfiltration"], None),
    ("T1567", "Exfiltration Over Web Service", ["exfiltration"], None),
    ("T1486", "Data Encrypted for Impact", ["impact"], None),
    ("T1490", "Inhibit System Recovery", ["impact"], None),
    ("T1485", "Data Destruction", ["impact"], None),
    ("T1489", "Service Stop", ["impact"], None),
]

#: (sub id, name, parent id) — sub-techniques the loader folds into parents.
ENTERPRISE_SUBTECHNIQUES = [
    ("T1566.001", "Spearphishing Attachment", "T1566"),
    ("T1566.002", "Spearphishing Link", "T1566"),
    ("T1059.001", "PowerShell", "T1059"),
    ("T1070.004", "File Deletion", "T1070"),
    ("T1003.001", "LSASS Memory", "T1003"),
    ("T1021.001", "Remote Desktop Protocol", "T1021"),
    ("T1071.001", "Web Protocols", "T1071"),
]

ENTERPRISE_REVOKED = [("T1064", "Scripting", ["execution", "defense-evasion"])]
ENTERPRISE_DEPRECATED = [("T1501", "Systemd Service", ["persistence"])]

# Group profiles use sub ids where the group's tradecraft is specific; the
# loader folds them to the parent technique.
ENTERPRISE_GROUPS = [
    (
        "G0007",
        "APT28",
        ["Fancy Bear", "Sofacy"],
        ["T1595", "T1566.001", "T1078", "T1059.001", "T1547", "T1003.001",
         "T1082", "T1021.001", "T1114", "T1071.001", "T1041"],
    ),
    (
        "G0016",
        "APT29",
        ["Cozy Bear", "Midnight Blizzard"],
        ["T1589", "T1583", "T1566.002", "T1078", "T1059", "T1053", "T1027",
         "T1070.004", "T1003", "T1018", "T1005", "T1573", "T1567"],
    ),
    (
        "G0032",
        "Lazarus Group",
        ["HIDDEN COBRA", "Diamond Sleet"],
        ["T1592", "T1588", "T1566.001", "T1204", "T1547", "T1055", "T1027",
         "T1110", "T1083", "T1570", "T1560", "T1105", "T1041", "T1486"],
    ),
    (
        "G0045",
        "menuPass",
        ["APT10", "Stone Panda", "Cicada"],
        ["T1595", "T1190", "T1059", "T1053", "T1136", "T1003", "T1046",
         "T1021", "T1005", "T1090", "T1041"],
    ),
    (
        "G0046",
        "FIN7",
        ["Carbanak Group", "Sangria Tempest"],
        ["T1566.001", "T1204", "T1059.001", "T1543", "T1112", "T1056",
         "T1113", "T1105", "T1573", "T1490", "T1486"],
    ),
    (
        "G0050",
        "APT32",
        ["OceanLotus", "SeaLotus"],
        ["T1592", "T1566.002", "T1204", "T1059", "T1053", "T1218", "T1112",
         "T1046", "T1021", "T1071", "T1105", "T1489"],
    ),
    (
        "G0059",
        "Magic Hound",
        ["APT35", "Charming Kitten"],
        ["T1589", "T1583", "T1566.002", "T1078", "T1059.001", "T1136",
         "T1110", "T1018", "T1114", "T1071", "T1567"],
    ),
    (
        "G0069",
        "MuddyWater",
        ["Earth Vetala", "Mango Sandstorm"],
        ["T1588", "T1566.001", "T1059.001", "T1047", "T1547", "T1027",
         "T1218", "T1056", "T1082", "T1083", "T1105", "T1090"],
    ),
    (
        "G0092",
        "TA505",
        ["Hive0065"],
        ["T1608", "T1566.001", "T1204", "T1059", "T1543", "T1027", "T1218",
         "T1112", "T1046", "T1570", "T1105", "T1486"],
    ),
    (
        "G0094",
        "Kimsuky",
        ["Velvet Chollima", "Emerald Sleet"],
        ["T1589", "T1583", "T1566.002", "T1204", "T1547", "T1136", "T1110",
         "T1056", "T1083", "T1114", "T1560", "T1567"],
    ),
    (
        "G0096",
        "APT41",
        ["Wicked Panda", "Brass Typhoon"],
        ["T1595", "T1190", "T1133", "T1078", "T1059", "T1053", "T1055",
         "T1070.004", "T1003", "T1046", "T1018", "T1021", "T1570", "T1090",
         "T1489"],
    ),
    (
        "G0102",
        "Wizard Spider",
        ["UNC1878", "Periwinkle Tempest"],
        ["T1566.001", "T1078", "T1059.001", "T1047", "T1543", "T1055",
         "T1070.004", "T1003.001", "T1018", "T1083", "T1021.001", "T1105",
         "T1490", "T1486"],
    ),
]

# --------------------------------------------------------------------------
# Assembly


def stix_id(domain: str, stix_type: str, key: str) -> str:
    return f"{stix_type}--{uuid.uuid5(uuid.NAMESPACE_URL, f'icshunt/{domain}/{stix_type}/{key}')}"


def external_ref(source: str, ext_id: str, kind: str) -> dict:
    return {
        "source_name": source,
        "external_id": ext_id,
        "url": f"https://attack.mitre.org/{kind}/{ext_id.replace('.', '/')}",
    }


def describe(name: str, tactic_names: list[str]) -> str:
    stages = " and ".join(tactic_names[:2]).lower()
    return (
        f"Adversaries may use {name.lower()} to further the {stages} stage of an "
        f"operation. Defenders observe this technique as {name.lower()} activity "
        f"against monitored assets."
    )


def build_domain(
    domain: str,
    source_name: str,
    kill_chain: str,
    matrix_name: str,
    collection_name: str,
    tactics: list,
    techniques: list,
    subtechniques: list,
    revoked: list,
    deprecated: list,
    groups: list,
    min_distance: int,
) -> dict:
    shortname_to_name = {short: name for _, name, short in tactics}
    objects: list[dict] = []

    tactic_stix: dict[str, str] = {}
    for ext_id, name, short in tactics:
        sid = stix_id(domain, "x-mitre-tactic", ext_id)
        tactic_stix[short] = sid
        objects.append(
            {
                "type": "x-mitre-tactic",
                "spec_version": "2.1",
                "id": sid,
                "created": CREATED,
                "modified": MODIFIED,
                "name": name,
                "description": f"The adversary is trying to accomplish the {name.lower()} objective.",
                "x_mitre_shortname": short,
                "external_references": [external_ref(source_name, ext_id, "tactics")],
            }
        )

    technique_stix: dict[str, str] = {}

    def technique_object(ext_id, name, shorts, description, *, revoked_flag=False,
                         deprecated_flag=False, parent=None) -> dict:
        sid = stix_id(domain, "attack-pattern", ext_id)
        technique_stix[ext_id] = sid
        obj = {
            "type": "attack-pattern",
            "spec_version": "2.1",
            "id": sid,
            "created": CREATED,
            "modified": MODIFIED,
            "name": name,
            "description": description
            or describe(name, [shortname_to_name[s] for s in shorts]),
            "kill_chain_phases": [
                {"kill_chain_name": kill_chain, "phase_name": s} for s in shorts
            ],
            "external_references": [external_ref(source_name, ext_id, "techniques")],
        }
        if domain == "enterprise":
            obj["x_mitre_is_subtechnique"] = parent is not None
        if revoked_flag:
            obj["revoked"] = True
        if deprecated_flag:
            obj["x_mitre_deprecated"] = True
        return obj

    for ext_id, name, shorts, description in techniques:
        objects.append(technique_object(ext_id, name, shorts, description))
    parent_shorts = {ext_id: shorts for ext_id, _, shorts, _ in techniques}
    for ext_id, name, parent in subtechniques:
        objects.append(
            technique_object(ext_id, name, parent_shorts[parent], None, parent=parent)
        )
    for ext_id, name, shorts in revoked:
        objects.append(technique_object(ext_id, name, shorts, None, revoked_flag=True))
    for ext_id, name, shorts in deprecated:
        objects.append(technique_object(ext_id, name, shorts, None, deprecated_flag=True))

    for ext_id, name, aliases, used in groups:
        sid = stix_id(domain, "intrusion-set", ext_id)
        objects.append(
            {
                "type": "intrusion-set",
                "spec_version": "2.1",
                "id": sid,
                "created": CREATED,
                "modified": MODIFIED,
                "name": name,
                "description": f"{name} is a tracked intrusion set.",
                "aliases": [name] + aliases,
                "external_references": [external_ref("mitre-attack", ext_id, "groups")],
            }
        )
        for tech in used:
            objects.append(
                {
                    "type": "relationship",
                    "spec_version": "2.1",
                    "id": stix_id(domain, "relationship", f"{ext_id}-uses-{tech}"),
                    "created": CREATED,
                    "modified": MODIFIED,
                    "relationship_type": "uses",
                    "source_ref": sid,
                    "target_ref": technique_stix[tech],
                }
            )

    # Real bundles carry relationships to revoked techniques and to objects
    # that are not techniques at all; loaders must drop these quietly.
    first_group_sid = stix_id(domain, "intrusion-set", groups[0][0])
    if revoked:
        objects.append(
            {
                "type": "relationship",
                "spec_version": "2.1",
                "id": stix_id(domain, "relationship", f"{groups[0][0]}-uses-{revoked[0][0]}"),
                "created": CREATED,
                "modified": MODIFIED,
                "relationship_type": "uses",
                "source_ref": first_group_sid,
                "target_ref": technique_stix[revoked[0][0]],
            }
        )
    malware_sid = stix_id(domain, "malware", "SNAPDRAGON")
    objects.append(
        {
            "type": "malware",
            "spec_version": "2.1",
            "id": malware_sid,
            "created": CREATED,
            "modified": MODIFIED,
            "name": "SNAPDRAGON",
            "description": "Loader observed in intrusions attributed to several of the catalogued groups.",
            "is_family": True,
            "external_references": [external_ref(source_name, "S9001", "software")],
        }
    )
    objects.append(
        {
            "type": "relationship",
            "spec_version": "2.1",
            "id": stix_id(domain, "relationship", f"{groups[0][0]}-uses-SNAPDRAGON"),
            "created": CREATED,
            "modified": MODIFIED,
            "relationship_type": "uses",
            "source_ref": first_group_sid,
            "target_ref": malware_sid,
        }
    )

    objects.append(
        {
            "type": "x-mitre-matrix",
            "spec_version": "2.1",
            "id": stix_id(domain, "x-mitre-matrix", domain),
            "created": CREATED,
            "modified": MODIFIED,
            "name": matrix_name,
            "description": f"The tactic columns of the {matrix_name} matrix in display order.",
            "tactic_refs": [tactic_stix[short] for _, _, short in tactics],
            "external_references": [
                external_ref(source_name, f"{domain}-attack", "matrices")
            ],
        }
    )
    objects.append(
        {
            "type": "x-mitre-collection",
            "spec_version": "2.1",
            "id": stix_id(domain, "x-mitre-collection", domain),
            "created": CREATED,
            "modified": MODIFIED,
            "name": collection_name,
            "description": f"Offline snapshot of the {collection_name} knowledge base.",
            "x_mitre_version": "17.1",
        }
    )

    # -- consistency gates --------------------------------------------------
    sub_to_parent = {s: p for s, _, p in subtechniques}
    folded: dict[str, frozenset[str]] = {}
    for ext_id, _, _, used in groups:
        folded[ext_id] = frozenset(sub_to_parent.get(t, t) for t in used)
        unknown = [t for t in folded[ext_id] if t not in parent_shorts]
        assert not unknown, f"{ext_id} references unknown techniques {unknown}"
    ids = sorted(folded)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            distance = len(folded[a] ^ folded[b])
            assert distance >= min_distance, (
                f"{domain}: groups {a} and {b} are only Hamming distance "
                f"{distance} apart (need >= {min_distance})"
            )
    tactic_profiles = set()
    for ext_id in ids:
        shorts = frozenset(
            s for t in folded[ext_id] for s in parent_shorts[t]
        )
        assert shorts not in tactic_profiles or domain == "enterprise", (
            f"{domain}: duplicate tactic-level profile for {ext_id}"
        )
        tactic_profiles.add(shorts)

    return {
        "type": "bundle",
        "id": stix_id(domain, "bundle", domain),
        "objects": objects,
    }


def main() -> int:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    bundles = {
        "ics-attack.json": build_domain(
            domain="ics",
            source_name="mitre-ics-attack",
            kill_chain="mitre-ics-attack",
            matrix_name="ATT&CK for ICS",
            collection_name="ICS ATT&CK",
            tactics=ICS_TACTICS,
            techniques=ICS_TECHNIQUES,
            subtechniques=[],
            revoked=ICS_REVOKED,
            deprecated=ICS_DEPRECATED,
            groups=ICS_GROUPS,
            min_distance=MIN_PAIRWISE_DISTANCE_ICS,
        ),
        "enterprise-attack.json": build_domain(
            domain="enterprise",
            source_name="mitre-attack",
            kill_chain="mitre-attack",
            matrix_name="Enterprise ATT&CK",
            collection_name="Enterprise ATT&CK",
            tactics=ENTERPRISE_TACTICS,
            techniques=ENTERPRISE_TECHNIQUES,
            subtechniques=ENTERPRISE_SUBTECHNIQUES,
            revoked=ENTERPRISE_REVOKED,
            deprecated=ENTERPRISE_DEPRECATED,
            groups=ENTERPRISE_GROUPS,
            min_distance=MIN_PAIRWISE_DISTANCE_ENTERPRISE,
        ),
    }
    for filename, bundle in bundles.items():
        path = OUT_DIR / filename
        path.write_text(json.dumps(bundle, indent=1) + "\n", encoding="utf-8")
        counts: dict[str, int] = {}
        for obj in bundle["objects"]:
            counts[obj["type"]] = counts.get(obj["type"], 0) + 1
        summary = ", ".join(f"{v} {k}" for k, v in sorted(counts.items()))
        print(f"wrote {path} ({summary})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
