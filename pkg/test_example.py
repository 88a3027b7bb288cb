#!/usr/bin/env python3
"""
端到端示例脚本：通过 HTTP 接口计算偏差界并运行一个小型实验
"""

import json

from fastapi.testclient import TestClient

from app.main import app

client = TestClient(app)


def test_health():
    """测试健康检查"""
    print("🏥 测试健康检查...")
    response = client.get("/health/")
    print(f"状态码: {response.status_code}")
    print(f"响应: {json.dumps(response.json(), indent=2, ensure_ascii=False)}")
    assert response.status_code == 200
    print()


def test_gaussian_bound():
    """独立同分布 Σ0 = I_4、n = 100 时的显式高斯界"""
    print("📐 测试高斯矩界...")
    eye = [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
    response = client.post("/bounds/gaussian-moment", json={"sigma_sequence": [eye], "n": 100})
    value = response.json()["value"]
    print(f"✅ 界值: {value:.4f}")
    assert abs(value - 1.2914) < 1e-4
    print()


def test_cantor():
    """测试 B = 100 的类 Cantor 集"""
    print("🧩 测试类 Cantor 集...")
    data = client.get("/cantor/100").json()
    print(f"   ℓ = {data['report']['ell']}, card(K_B) = {data['report']['card_KB']}")
    print(f"   性质: {data['report']['properties']}")
    assert data["all_pass"]
    print()


def test_bound_check_experiment():
    """运行一个小型 bound-check 实验"""
    print("🧪 运行 bound-check 实验...")
    cfg = {
        "kind": "bound-check",
        "reps": 30,
        "master_seed": 7,
        "grids": {"n": [128], "p": [2], "m": [0], "spectrum": ["identity"]},
    }
    response = client.post("/experiments/", json=cfg)
    report = response.json()
    if response.status_code == 200:
        for cell in report["cells"]:
            print(f"✅ n={cell['n']} mean+2se={cell['mean_plus_2se']:.4f} bound={cell['gaussian_bound']:.4f}")
    else:
        print(f"❌ 实验失败: {response.status_code} - {response.text}")
    assert response.status_code == 200
    assert report["passed"]
    print()


def main():
    """主测试函数"""
    print("🚀 开始测试 Autocovariance Deviation Toolkit API")
    print("=" * 50)

    try:
        test_health()
        test_gaussian_bound()
        test_cantor()
        test_bound_check_experiment()
        print("✅ 所有测试完成!")
    except AssertionError as e:
        print(f"❌ 检查未通过: {e}")
    except Exception as e:
        print(f"❌ 测试过程中发生错误: {e}")


if __name__ == "__main__":
    main()
