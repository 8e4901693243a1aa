"""Operator command line: knowledge checks, traffic synthesis, hunting,
classifier training, and the API server.

Every option can also be supplied through the environment with the
``ICSHUNT_`` prefix (e.g. ``ICSHUNT_HUNT_STORE=hunt.db icshunt hunt ...``).
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import click

from . import IcshuntError, __version__
from .classifier import ModelHyperparams, evaluate, save_model, split_dataset, train
from .knowledge import (
    AugmentSpec,
    Domain,
    Granularity,
    KnowledgeBase,
    build_dataset,
    load_bundle_file,
    load_packaged_bundle,
)
from .pipeline import run_hunt
from .service import ApiConfig, serve
from .signatures import load_default_rules, load_rules
from .store import EventStore
from .trafficlab import ScenarioSpec, generate_scenario_files, steps_from_names

FORMAT_CHOICES = click.Choice(["table", "record-stream"])
GRANULARITY_CHOICES = click.Choice([g.value for g in Granularity])
DOMAIN_CHOICES = click.Choice([d.value for d in Domain])

_bundle_ics_option = click.option(
    "--bundle-ics",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="ICS knowledge bundle (defaults to the packaged snapshot).",
)
_bundle_enterprise_option = click.option(
    "--bundle-enterprise",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Enterprise knowledge bundle (defaults to the packaged snapshot).",
)
_format_option = click.option(
    "--format", "output_format", type=FORMAT_CHOICES, default="table",
    show_default=True, help="table for humans, record-stream for machines (NDJSON).",
)


def _load_kb(domain: Domain, path: str | None) -> KnowledgeBase:
    try:
        if path is not None:
            return load_bundle_file(path, domain)
        return load_packaged_bundle(domain)
    except IcshuntError as exc:
        raise click.ClickException(str(exc))


def _load_rules(rules_arg: str, kb: KnowledgeBase):
    if rules_arg == "default":
        return load_default_rules(kb)
    path = Path(rules_arg)
    if not path.is_file():
        raise click.ClickException(f"rule file not found: {path}")
    try:
        return load_rules(path.read_text(encoding="utf-8"), kb, source=str(path))
    except IcshuntError as exc:
        raise click.ClickException(str(exc))


def _parse_bind(ctx, param, value: str) -> tuple[str, int]:
    host, sep, port_text = value.rpartition(":")
    if not sep or not host:
        raise click.BadParameter("expected ADDR:PORT")
    try:
        port = int(port_text)
    except ValueError:
        raise click.BadParameter(f"port {port_text!r} is not an integer")
    if not 1 <= port <= 65535:
        raise click.BadParameter(f"port must be in [1, 65535], got {port}")
    return host, port


def _emit_records(records) -> None:
    for record in records:
        click.echo(json.dumps(record, separators=(",", ":"), sort_keys=True))


@click.group(
    context_settings={"auto_envvar_prefix": "ICSHUNT", "help_option_names": ["-h", "--help"]},
    no_args_is_help=False,
)
@click.version_option(version=__version__, prog_name="icshunt")
def main() -> None:
    """Threat hunting for Modbus/TCP industrial networks."""


@main.command("ingest-knowledge")
@_bundle_ics_option
@_bundle_enterprise_option
@click.option(
    "--domain", type=click.Choice(["ics", "enterprise", "both"]), default="both",
    show_default=True, help="Which knowledge bundles to load and verify.",
)
@_format_option
def ingest_knowledge(bundle_ics, bundle_enterprise, domain, output_format) -> None:
    """Load knowledge bundles, verify their integrity, and report contents."""
    wanted = [Domain.ICS, Domain.ENTERPRISE] if domain == "both" else [Domain(domain)]
    paths = {Domain.ICS: bundle_ics, Domain.ENTERPRISE: bundle_enterprise}
    rows = []
    for dom in wanted:
        kb = _load_kb(dom, paths[dom])
        rows.append(
            {
                "record": "knowledge",
                "domain": dom.value,
                "bundle_version": kb.bundle_version,
                "tactics": len(kb.tactics),
                "techniques": len(kb.techniques),
                "groups": len(kb.groups),
                "source": paths[dom] or "packaged",
            }
        )
    if output_format == "record-stream":
        _emit_records(rows)
        return
    click.echo(f"{'domain':<12} {'version':<8} {'tactics':>7} {'techniques':>10} {'groups':>6}  source")
    for row in rows:
        click.echo(
            f"{row['domain']:<12} {row['bundle_version'] or '-':<8} "
            f"{row['tactics']:>7} {row['techniques']:>10} {row['groups']:>6}  {row['source']}"
        )


@main.command("generate-traffic")
@click.option("--out", "capture_path", type=click.Path(dir_okay=False, writable=True),
              required=True, help="Capture file to write.")
@click.option("--ground-truth", "truth_path", type=click.Path(dir_okay=False, writable=True),
              default=None, help="Optional JSON sidecar describing each attack step.")
@click.option("--attacker", default="198.51.100.66", show_default=True,
              help="Attacker IPv4 address.")
@click.option("--victim", default="192.0.2.10", show_default=True,
              help="Victim IPv4 address.")
@click.option("--port", default=5300, show_default=True, type=click.IntRange(1, 65535),
              help="Victim TCP service port.")
@click.option("--steps", default="scan,device_identification,uid_enumeration,state_modification",
              show_default=True,
              help="Comma-separated attack steps; empty string for benign-only traffic.")
@click.option("--gap", default=0.25, show_default=True, type=click.FloatRange(min=0, min_open=True),
              help="Seconds between attacker packets.")
@click.option("--background", default=12, show_default=True, type=click.IntRange(min=0),
              help="Count of benign read polls from a third host.")
@click.option("--seed", default=42, show_default=True, type=int)
@_format_option
def generate_traffic(capture_path, truth_path, attacker, victim, port, steps, gap,
                     background, seed, output_format) -> None:
    """Synthesize a labeled Modbus/TCP attack capture."""
    names = [n for n in steps.split(",") if n.strip()]
    try:
        spec = ScenarioSpec(
            attacker_ip=attacker,
            victim_ip=victim,
            victim_port=port,
            steps=steps_from_names(names),
            inter_packet_gap=gap,
            background_traffic=background,
            seed=seed,
        )
        truth = generate_scenario_files(spec, capture_path, truth_path)
    except IcshuntError as exc:
        raise click.ClickException(str(exc))
    if output_format == "record-stream":
        _emit_records(
            [{"record": "step", **step} for step in json.loads(truth.to_json())["steps"]]
            + [{"record": "capture", "path": capture_path, "packets": truth.total_packets}]
        )
        return
    click.echo(f"wrote {capture_path} ({truth.total_packets} packets)")
    for step in truth.steps:
        click.echo(
            f"  {step.step.value:<22} packets {step.first_index}..{step.last_index}"
            f"  expect {step.attack_type} ({', '.join(step.technique_ids)})"
        )
    if truth_path:
        click.echo(f"wrote {truth_path}")


@main.command("hunt")
@click.option("--capture", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Capture file to replay through the pipeline.")
@click.option("--rules", default="default", show_default=True,
              help="Rule file path, or 'default' for the bundled rules.")
@click.option("--store", "store_path", type=click.Path(dir_okay=False), default=None,
              help="Event store file; omit to hunt without persisting.")
@_bundle_ics_option
@click.option("--granularity", type=GRANULARITY_CHOICES, default="technique",
              show_default=True, help="Feature granularity for attribution.")
@click.option("--seed", default=0, show_default=True, type=int,
              help="Classifier training seed.")
@click.option("--modbus-port", "modbus_ports", type=click.IntRange(1, 65535),
              multiple=True, help="Extra TCP port treated as a Modbus service.")
@_format_option
def hunt(capture, rules, store_path, bundle_ics, granularity, seed, modbus_ports,
         output_format) -> None:
    """Replay a capture through detection, correlation, and attribution."""
    kb = _load_kb(Domain.ICS, bundle_ics)
    ruleset = _load_rules(rules, kb)
    try:
        dataset = build_dataset(kb, Granularity(granularity))
        model = train(dataset, ModelHyperparams(seed=seed))
    except IcshuntError as exc:
        raise click.ClickException(str(exc))

    store = EventStore(store_path) if store_path else None
    try:
        try:
            result = run_hunt(
                capture, ruleset, kb, model,
                store=store,
                port_filter=set(modbus_ports) or None,
            )
        except IcshuntError as exc:
            raise click.ClickException(str(exc))
    finally:
        if store is not None:
            store.close()

    hypotheses = result.final_hypotheses()
    if output_format == "record-stream":
        records = [{"record": "detection", **d.to_doc()} for d in result.detections]
        records += [{"record": "hypothesis", **h.to_doc()} for h in hypotheses]
        records.append(
            {
                "record": "summary",
                "capture": capture,
                "packets": result.packets,
                "frames": result.frames,
                "detections": len(result.detections),
                "hypotheses": len(hypotheses),
                "attack_types": sorted({d.attack_type for d in result.detections}),
            }
        )
        _emit_records(records)
        return

    click.echo(
        f"replayed {capture}: {result.packets} packets, {result.frames} protocol frames"
    )
    by_type = Counter(d.attack_type for d in result.detections)
    if not by_type:
        click.echo("no detections")
    else:
        click.echo(f"\n{'attack type':<24} {'count':>5}  techniques")
        for attack_type, count in sorted(by_type.items()):
            techniques = sorted(
                {t for d in result.detections if d.attack_type == attack_type
                 for t in d.technique_ids}
            )
            click.echo(f"{attack_type:<24} {count:>5}  {', '.join(techniques)}")
    if hypotheses:
        click.echo(f"\n{'hypothesis':<18} {'status':<10} {'dets':>4}  attacker -> victim  top candidate")
        for h in hypotheses:
            top = h.candidates[0] if h.candidates else None
            top_text = (
                f"{kb.groups[top.group_id].name} ({top.group_id})"
                if top and top.group_id in kb.groups
                else (top.group_id if top else "-")
            )
            click.echo(
                f"{h.id:<18} {h.status.value:<10} {len(h.detection_ids):>4}  "
                f"{h.attacker_ip} -> {h.victim_ip}  {top_text}"
            )
    if store_path:
        click.echo(f"\nevents written to {store_path}")


@main.command("train")
@click.option("--domain", type=DOMAIN_CHOICES, default="ics", show_default=True,
              help="Knowledge domain to train on.")
@_bundle_ics_option
@_bundle_enterprise_option
@click.option("--granularity", type=GRANULARITY_CHOICES, default="technique",
              show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--noise", default=0.0, show_default=True,
              type=click.FloatRange(min=0, max=0.5, max_open=True),
              help="Per-feature flip probability for augmented copies.")
@click.option("--copies", default=0, show_default=True, type=click.IntRange(min=0),
              help="Noisy copies generated per group profile.")
@click.option("--test-fraction", default=0.0, show_default=True,
              type=click.FloatRange(min=0, max=0.9),
              help="Held-out fraction; 0 evaluates on the training rows.")
@click.option("--model-out", type=click.Path(dir_okay=False, writable=True),
              default=None, help="Write the trained model to this file.")
@_format_option
def train_command(domain, bundle_ics, bundle_enterprise, granularity, seed, noise,
                  copies, test_fraction, model_out, output_format) -> None:
    """Train the group-attribution classifier and report accuracy."""
    dom = Domain(domain)
    kb = _load_kb(dom, bundle_ics if dom is Domain.ICS else bundle_enterprise)
    try:
        dataset = build_dataset(
            kb,
            Granularity(granularity),
            AugmentSpec(noise_rate=noise, copies_per_group=copies, seed=seed),
        )
        if test_fraction > 0:
            train_set, test_set = split_dataset(dataset, test_fraction, seed)
        else:
            train_set, test_set = dataset, dataset
        model = train(train_set, ModelHyperparams(seed=seed))
        accuracy = evaluate(model, test_set)
    except IcshuntError as exc:
        raise click.ClickException(str(exc))
    if model_out:
        save_model(model, model_out)

    record = {
        "record": "model",
        "domain": dom.value,
        "granularity": granularity,
        "seed": seed,
        "noise": noise,
        "copies": copies,
        "train_rows": len(train_set.rows),
        "test_rows": len(test_set.rows),
        "classes": len(model.classes),
        "final_loss": model.report.final_loss,
        "accuracy": accuracy,
        "model_path": model_out,
    }
    if output_format == "record-stream":
        _emit_records([record])
        return
    click.echo(
        f"trained {record['classes']} classes on {record['train_rows']} rows "
        f"({dom.value}/{granularity}, seed {seed})"
    )
    click.echo(f"accuracy {accuracy:.4f} on {record['test_rows']} rows")
    if model_out:
        click.echo(f"model written to {model_out}")


@main.command("serve")
@click.option("--bind", default="127.0.0.1:8800", show_default=True,
              callback=_parse_bind, help="ADDR:PORT to listen on.")
@click.option("--store", "store_path", type=click.Path(dir_okay=False), required=True,
              help="Event store file (created if missing).")
@_bundle_ics_option
@_bundle_enterprise_option
@click.option("--rules", default="default", show_default=True,
              help="Rule file path, or 'default' for the bundled rules.")
@click.option("--model", "model_path", type=click.Path(dir_okay=False), default=None,
              help="Model file to load, or to create when missing.")
@click.option("--granularity", type=GRANULARITY_CHOICES, default="technique",
              show_default=True)
def serve_command(bind, store_path, bundle_ics, bundle_enterprise, rules, model_path,
                  granularity) -> None:
    """Run the HTTP API and alert stream (blocks until interrupted)."""
    host, port = bind
    rules_path = None if rules == "default" else rules
    if rules_path is not None and not Path(rules_path).is_file():
        raise click.ClickException(f"rule file not found: {rules_path}")
    config = ApiConfig(
        store_path=store_path,
        bundle_ics=bundle_ics,
        bundle_enterprise=bundle_enterprise,
        rules_path=rules_path,
        model_path=model_path,
        bind_host=host,
        bind_port=port,
        granularity=Granularity(granularity),
    )
    try:
        serve(config)
    except IcshuntError as exc:
        raise click.ClickException(str(exc))


if __name__ == "__main__":
    main()
