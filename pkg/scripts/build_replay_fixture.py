"""Regenerate fixtures/replay/: 42 annotated cases plus scripted agent outputs.

The multi-agent Triage Nurse verdicts and the single-agent ED Doctor KTAS
reviews are laid out so that replaying them reproduces the two published
reference confusion matrices cell for cell. Run from the repository root:

    python scripts/build_replay_fixture.py
"""

from __future__ import annotations

import json
from pathlib import Path

from ktas_cdss.core import Disposition, ExpertAnnotation, KtasPrediction, make_case
from ktas_cdss.evaluation import dump_cases
from ktas_cdss.reports import (
    DiagnosisReport,
    ManagementDecision,
    MedicationEntry,
    MedicationReport,
    TriageAssessment,
    render_diagnosis,
    render_management,
    render_medication,
    render_triage,
)

OUT = Path(__file__).resolve().parents[1] / "fixtures" / "replay"

# rows: prediction label -> counts for expert levels 1..5
MULTI_AGENT_MATRIX = {
    "1": (3, 0, 0, 0, 0),
    "2": (0, 15, 2, 2, 1),
    "3": (0, 1, 7, 5, 1),
    "4": (0, 0, 0, 0, 0),
    "5": (0, 0, 0, 0, 5),
}
SINGLE_AGENT_MATRIX = {
    "1": (2, 1, 0, 0, 0),
    "1 or 2": (0, 4, 1, 0, 0),
    "2": (0, 8, 3, 1, 2),
    "3": (0, 2, 5, 4, 3),
    "3 or 4": (0, 0, 0, 0, 1),
    "4": (0, 0, 0, 0, 0),
    "5": (0, 0, 0, 0, 0),
    "Not applicable": (1, 1, 0, 2, 1),
}

# aggregate expert ratings over 43 rated cases, per mode
SCORE_TABLES = {
    "multi": {
        "five_point": {
            "primary_diagnosis": {"4": 2, "5": 41},
            "critical_findings": {"4": 1, "5": 42},
            "justification": {"5": 43},
        },
        "one_point": {
            "disposition_decision": {"0.5": 1, "1": 42},
            "immediate_action": {"1": 43},
            "medication": {"1": 43},
            "diagnostic_test": {"1": 43},
            "consultation": {"1": 43},
            "monitoring": {"1": 43},
        },
    },
    "single": {
        "five_point": {
            "primary_diagnosis": {"4": 2, "5": 41},
            "critical_findings": {"3": 3, "5": 40},
            "justification": {"3": 2, "4": 4, "5": 37},
        },
        "one_point": {
            "disposition_decision": {"0": 4, "0.5": 4, "1": 35},
            "immediate_action": {"0": 1, "0.5": 4, "1": 38},
            "medication": {"0.5": 3, "1": 40},
            "diagnostic_test": {"1": 43},
            "consultation": {"0": 1, "1": 42},
            "monitoring": {"1": 43},
        },
    },
}

# (narrative, working diagnosis, [(drug, dose)], disposition) per expert level
SCENARIOS: dict[int, list[tuple[str, str, list[tuple[str, str]], Disposition]]] = {
    1: [
        ("A 67-year-old man collapsed at home; bystander CPR was started and paramedics found "
         "him pulseless in ventricular fibrillation.", "Out-of-hospital cardiac arrest",
         [("Epinephrine", "1 mg IV every 3-5 minutes")], Disposition.ADMIT),
        ("A 24-year-old woman was found unresponsive after a suspected opioid overdose with "
         "agonal respirations and pinpoint pupils.", "Opioid toxicity with respiratory arrest",
         [("Naloxone", "0.4 mg IV, repeat as needed")], Disposition.ADMIT),
        ("A 58-year-old man with diabetes is unconscious with a glucose of 28 mg/dL and no "
         "history of alcohol use.", "Severe hypoglycemia with coma",
         [("Dextrose 50%", "25 g IV push")], Disposition.ADMIT),
    ],
    2: [
        ("A 61-year-old man has crushing substernal chest pain radiating to the left arm for "
         "40 minutes with ST elevation in the inferior leads.", "Inferior ST-elevation myocardial infarction",
         [("Aspirin", "325 mg PO once"), ("Heparin", "60 units/kg IV bolus")], Disposition.ADMIT),
        ("A 72-year-old woman developed sudden right-sided weakness and slurred speech one hour "
         "ago.", "Acute ischemic stroke", [("Alteplase", "0.9 mg/kg IV")], Disposition.ADMIT),
        ("A 55-year-old man reports the worst headache of his life with vomiting and neck "
         "stiffness.", "Subarachnoid hemorrhage", [("Nicardipine", "5 mg/h IV infusion")],
         Disposition.TRANSFER),
        ("A 48-year-old woman has fever of 39.4 C, hypotension 84/50 mmHg and confusion after "
         "a urinary infection.", "Septic shock from urosepsis",
         [("Ceftriaxone", "2 g IV daily"), ("Norepinephrine", "0.05 mcg/kg/min IV")], Disposition.ADMIT),
        ("A 33-year-old man was stabbed in the left thigh with pulsatile bleeding controlled by "
         "a tourniquet.", "Femoral arterial injury", [("Tranexamic acid", "1 g IV over 10 minutes")],
         Disposition.TRANSFER),
        ("A 70-year-old woman on warfarin fell and now has a progressively worsening headache "
         "and drowsiness.", "Traumatic intracranial hemorrhage on anticoagulation",
         [("Prothrombin complex concentrate", "25 units/kg IV")], Disposition.ADMIT),
        ("A 29-year-old woman with asthma cannot complete sentences, has silent chest and SpO2 "
         "of 88%.", "Life-threatening asthma exacerbation",
         [("Albuterol", "5 mg nebulized continuously"), ("Magnesium sulfate", "2 g IV")], Disposition.ADMIT),
        ("A 66-year-old man has tearing chest pain radiating to the back with unequal arm blood "
         "pressures.", "Acute aortic dissection", [("Esmolol", "500 mcg/kg IV bolus")],
         Disposition.TRANSFER),
        ("A 52-year-old woman has vomiting bright red blood with a heart rate of 124 bpm.",
         "Upper gastrointestinal hemorrhage", [("Pantoprazole", "80 mg IV bolus")], Disposition.ADMIT),
        ("A 19-year-old man with type 1 diabetes has abdominal pain, Kussmaul breathing and "
         "glucose of 540 mg/dL.", "Diabetic ketoacidosis", [("Insulin regular", "0.1 units/kg/h IV")],
         Disposition.ADMIT),
        ("A 45-year-old woman has sudden pleuritic chest pain and dyspnea after a long flight, "
         "heart rate 118 bpm.", "Pulmonary embolism", [("Enoxaparin", "1 mg/kg SC every 12 hours")],
         Disposition.ADMIT),
        ("A 78-year-old man has new atrial fibrillation with rapid ventricular response at "
         "160 bpm and dizziness.", "Atrial fibrillation with rapid ventricular response",
         [("Diltiazem", "0.25 mg/kg IV")], Disposition.ADMIT),
        ("A 36-year-old woman at 8 weeks of pregnancy has severe lower abdominal pain and "
         "syncope.", "Ruptured ectopic pregnancy", [("Lactated Ringer's", "1 L IV bolus")],
         Disposition.ADMIT),
        ("A 63-year-old man had a witnessed generalized seizure lasting more than six minutes "
         "that is still ongoing.", "Status epilepticus", [("Lorazepam", "4 mg IV")], Disposition.ADMIT),
        ("A 41-year-old man fell from a ladder and has chest wall tenderness with decreased "
         "breath sounds on the right.", "Traumatic pneumothorax", [("Morphine", "4 mg IV")],
         Disposition.ADMIT),
        ("A 57-year-old woman has acute shortness of breath, pink frothy sputum and blood "
         "pressure of 190/110 mmHg.", "Acute pulmonary edema", [("Nitroglycerin", "0.4 mg SL")],
         Disposition.ADMIT),
    ],
    3: [
        ("A 50-year-old man has dyspnea on exertion for two days with SpO2 of 93% on room air.",
         "Community-acquired pneumonia", [("Ceftriaxone", "1 g IV daily")], Disposition.ADMIT),
        ("A 34-year-old woman has bloody diarrhea six times a day with crampy abdominal pain.",
         "Infectious colitis", [("Ondansetron", "4 mg IV")], Disposition.CONTINUE_ER_CARE),
        ("A 68-year-old woman with COPD has increased sputum and wheezing, SpO2 91%.",
         "COPD exacerbation", [("Albuterol", "2.5 mg nebulized every 4 hours")], Disposition.ADMIT),
        ("A 27-year-old man has right lower quadrant pain for 18 hours with low-grade fever.",
         "Acute appendicitis", [("Morphine", "4 mg IV")], Disposition.ADMIT),
        ("A 74-year-old man has had progressive leg swelling and orthopnea for a week.",
         "Decompensated heart failure", [("Furosemide", "40 mg IV")], Disposition.ADMIT),
        ("A 39-year-old woman has right upper quadrant pain after fatty meals with vomiting.",
         "Acute cholecystitis", [("Ketorolac", "15 mg IV")], Disposition.ADMIT),
        ("A 60-year-old man has left flank pain radiating to the groin with hematuria.",
         "Ureteral colic", [("Ketorolac", "15 mg IV")], Disposition.CONTINUE_ER_CARE),
        ("A 22-year-old woman has a swollen, warm right calf after a long car journey.",
         "Deep vein thrombosis", [("Enoxaparin", "1 mg/kg SC every 12 hours")], Disposition.DISCHARGE),
        ("A 46-year-old man has persistent palpitations with a regular narrow-complex "
         "tachycardia at 170 bpm, hemodynamically stable.", "Supraventricular tachycardia",
         [("Adenosine", "6 mg IV rapid push")], Disposition.DISCHARGE),
    ],
    4: [
        ("A 31-year-old woman has vomiting and diarrhea since yesterday with a temperature of "
         "38.6 C.", "Acute febrile gastroenteritis", [("Ondansetron", "4 mg PO")], Disposition.DISCHARGE),
        ("A 44-year-old woman has dysuria, frequency and suprapubic abdominal pain.",
         "Urinary tract infection", [("Nitrofurantoin", "100 mg PO twice daily")], Disposition.DISCHARGE),
        ("A 25-year-old man twisted his ankle playing football and cannot bear weight.",
         "Ankle sprain, fracture to be excluded", [("Ibuprofen", "400 mg PO every 8 hours")],
         Disposition.DISCHARGE),
        ("A 53-year-old man has a red, hot, swollen area on the shin for three days.",
         "Lower leg cellulitis", [("Cephalexin", "500 mg PO four times daily")], Disposition.DISCHARGE),
        ("A 37-year-old woman has a migraine-type headache similar to prior episodes with "
         "photophobia.", "Migraine without aura", [("Metoclopramide", "10 mg IV")], Disposition.DISCHARGE),
        ("A 64-year-old man has acute low back pain after lifting without neurological "
         "deficits.", "Mechanical low back pain", [("Acetaminophen", "1 g PO every 6 hours")],
         Disposition.DISCHARGE),
        ("A 29-year-old woman has an allergic rash with itching after starting amoxicillin, "
         "no airway involvement.", "Drug eruption", [("Cetirizine", "10 mg PO daily")],
         Disposition.DISCHARGE),
    ],
    5: [
        ("A 23-year-old man has a runny nose, sore throat and mild cough for three days.",
         "Common cold", [("Acetaminophen", "500 mg PO every 6 hours as needed")], Disposition.DISCHARGE),
        ("A 35-year-old woman has a 2 cm laceration on the finger from a kitchen knife, bleeding "
         "controlled.", "Simple finger laceration", [("Lidocaine 1%", "local infiltration")],
         Disposition.DISCHARGE),
        ("A 40-year-old man has loose stools for two days without fever or blood.",
         "Acute non-bloody diarrhea", [("Oral rehydration salts", "as needed PO")], Disposition.DISCHARGE),
        ("A 58-year-old woman requests a refill of her antihypertensive medication; blood "
         "pressure 142/88 mmHg.", "Chronic hypertension, medication refill",
         [("Amlodipine", "5 mg PO daily")], Disposition.DISCHARGE),
        ("A 19-year-old woman has mild nausea and vomiting after a meal, tolerating fluids.",
         "Mild gastroenteritis", [("Ondansetron", "4 mg PO")], Disposition.DISCHARGE),
        ("A 47-year-old man has chronic knee pain unchanged for months.",
         "Osteoarthritis of the knee", [("Ibuprofen", "400 mg PO every 8 hours")], Disposition.DISCHARGE),
        ("A 30-year-old woman has an insect bite with local redness and no systemic symptoms.",
         "Local insect bite reaction", [("Hydrocortisone 1% cream", "topical twice daily")],
         Disposition.DISCHARGE),
    ],
}


def expand(matrix: dict[str, tuple[int, ...]], expert: int) -> list[str]:
    out = []
    for label, counts in matrix.items():
        out += [label] * counts[expert - 1]
    return out


def review_text(label: str, triage_context: bool) -> str:
    pred = KtasPrediction.from_label(label)
    if not pred.is_exact and label == "Not applicable":
        return "A definitive KTAS level cannot be determined from the information available."
    lead = f"{label}. " if label != "Not applicable" else ""
    if triage_context:
        return lead + "Agree with the triage nurse's classification given the presentation."
    if pred.is_exact:
        return lead + "Assigned from the presenting complaint and vital signs."
    return lead + "The presentation sits between these two levels."


def outputs_for(narrative: str, diagnosis: str, drugs: list[tuple[str, str]],
                disposition: Disposition, multi_label: str, single_label: str
                ) -> dict[str, str]:
    dx = DiagnosisReport(
        primary_diagnosis=diagnosis,
        supporting_evidence="Presentation and history as described in the case narrative.",
        differentials=(f"{diagnosis} variant: less likely given the presentation",),
        medications=tuple(f"{d}, {dose}" for d, dose in drugs),
        interventions="IV access, cardiac monitoring as indicated",
        fluid_management="Balanced crystalloid as clinically indicated",
        pain_management="Multimodal analgesia titrated to pain score",
        tests=("Complete blood count: baseline", "Basic metabolic panel: electrolytes and renal function"),
        complications=("Clinical deterioration: reassess vital signs frequently",),
        consultations=("Relevant specialty service: if no improvement",),
        monitoring_plan="Vital signs every 30 minutes until stable",
        guidelines="Institutional emergency care pathway",
    )
    meds = MedicationReport(
        condition_summary=f"Working diagnosis: {diagnosis}.",
        medications=tuple(
            MedicationEntry(name=d, dose_route_freq=dose, indication=diagnosis,
                            appropriateness="Appropriate for adult dosing",
                            interactions_note="No significant interactions identified",
                            contraindications="None known", administration="Per standard protocol",
                            monitoring="Monitor for adverse effects")
            for d, dose in drugs
        ),
        drug_disease_interactions="None identified",
        high_alert_medications="Review per institutional list",
        pharmacokinetic_considerations="Adjust for renal function if impaired",
        recommendations=("Reassess therapy after initial response",),
        er_considerations=("Verify allergies before administration",),
        references=("Institutional formulary",),
    )
    triage = TriageAssessment(
        ktas=KtasPrediction.from_label(multi_label),
        justification=f"Assigned from the presentation consistent with {diagnosis.lower()}.",
        assessment=(f"Presenting Symptoms: {narrative}",
                    "Vital Signs: as documented in the narrative"),
        critical_findings=f"Findings consistent with {diagnosis.lower()}.",
        recommended_actions="Proceed with physician assessment and the proposed plan.",
        additional_information="None",
    )

    def management(label: str, from_triage: bool) -> str:
        return render_management(ManagementDecision(
            ktas_review_text=review_text(label, from_triage),
            primary_diagnosis=diagnosis,
            critical_findings="As identified in the triage and physician reports.",
            disposition_text=disposition.label,
            justification="Disposition chosen from clinical severity and resource needs.",
            immediate_actions=("Establish IV access and monitoring",),
            medications=tuple(f"{d}: {dose}" for d, dose in drugs),
            tests=("Complete blood count",),
            consultations=("Relevant specialty service as needed",),
            monitoring=("Vital signs every 30 minutes",),
            resource_allocation="Standard ED resources.",
            communication_patient="Explain diagnosis and plan.",
            communication_team="Hand over plan to receiving team.",
            contingency="Escalate care if vital signs deteriorate.",
            additional_considerations="None.",
            references=("Institutional emergency care pathway",),
        ))

    return {
        "emergency_physician": render_diagnosis(dx),
        "pharmacist": render_medication(meds),
        "triage_nurse": render_triage(triage),
        "multi:ed_doctor_in_charge": management(multi_label, True),
        "single:ed_doctor_in_charge": management(single_label, False),
    }


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    cases, entries = [], {}
    n = 0
    for expert in (1, 2, 3, 4, 5):
        multi = expand(MULTI_AGENT_MATRIX, expert)
        single = expand(SINGLE_AGENT_MATRIX, expert)
        scenarios = SCENARIOS[expert]
        assert len(multi) == len(single) == len(scenarios), expert
        for (narrative, dx, drugs, disposition), m_label, s_label in zip(scenarios, multi, single):
            n += 1
            case_id = f"case-{n:02d}"
            cases.append(make_case(case_id, narrative, None, ExpertAnnotation(ktas_level=expert)))
            for key, text in outputs_for(narrative, dx, drugs, disposition, m_label, s_label).items():
                mode, _, role = key.rpartition(":")
                prefix = f"{mode}:" if mode else ""
                entries[f"{prefix}{role}/{case_id}"] = text

    dump_cases(cases, OUT / "cases.jsonl")
    fixture = {"key_mode": "role_and_case", "cases": [c.case_id for c in cases], "entries": entries}
    (OUT / "fixture.json").write_text(json.dumps(fixture, indent=1, sort_keys=True) + "\n")
    (OUT / "expert_scores.json").write_text(json.dumps(SCORE_TABLES, indent=2) + "\n")
    print(f"wrote {len(cases)} cases and {len(entries)} scripted outputs to {OUT}")


if __name__ == "__main__":
    main()
